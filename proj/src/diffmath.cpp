// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "diffmath.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace momentloc::diffmath {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;
using MapC = Eigen::Map<const RowMat, 0, Strided>;
using MapM = Eigen::Map<RowMat, 0, Strided>;

MapC view(const Matrix& m) {
  return MapC(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()),
              Strided(static_cast<Eigen::Index>(m.cols())));
}
MapM view(Matrix& m) {
  return MapM(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()),
              Strided(static_cast<Eigen::Index>(m.cols())));
}
// Column block [col, col+width) of a row-major matrix.
MapC cols_view(const Matrix& m, std::size_t col, std::size_t width) {
  return MapC(m.data() + col, static_cast<Eigen::Index>(m.rows()),
              static_cast<Eigen::Index>(width), Strided(static_cast<Eigen::Index>(m.cols())));
}
MapM cols_view(Matrix& m, std::size_t col, std::size_t width) {
  return MapM(m.data() + col, static_cast<Eigen::Index>(m.rows()),
              static_cast<Eigen::Index>(width), Strided(static_cast<Eigen::Index>(m.cols())));
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DomainError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw DomainError("diffmath: Var is not bound to a tape");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw DomainError("diffmath: operands recorded on different tapes");
}

}  // namespace

const Matrix& Var::value() const { return tape_of(*this).value(id); }

double Var::scalar() const {
  const Matrix& m = value();
  if (m.size() != 1) throw DomainError("Var::scalar: not a 1x1 value");
  return m(0, 0);
}

void check_finite(const Matrix& m, const char* op) {
  for (double v : m.values())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value");
}

Var Tape::constant(Matrix value) {
  check_finite(value, "constant");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
  check_finite(value, "leaf");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = true;
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  return {this, nodes_.size() - 1};
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external != nullptr ? *n.external : n.value;
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.param != nullptr ? n.param->grad : n.grad;
}

Matrix& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  Matrix& g = n.param != nullptr ? n.param->grad : n.grad;
  const Matrix& v = value(id);
  if (!g.same_shape(v)) g = Matrix(v.rows(), v.cols());
  return g;
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
  check_finite(value, op);
  bool req = false;
  for (Var in : inputs) {
    if (in.tape != this) throw DomainError(std::string(op) + ": input from another tape");
    req = req || nodes_[in.id].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = req;
  if (req) n.backward = std::move(fn);
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw DomainError("backward: loss from another tape");
  if (value(loss.id).size() != 1) throw DomainError("backward: loss must be 1x1");
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss.id)(0, 0) += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
    check_finite(n.grad, "backward");
  }
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  const Var in[] = {a, b};
  return t.push(std::move(out), in, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(a)) view(tp.grad_ref(a.id)).noalias() += view(g) * view(b.value()).transpose();
    if (tp.needs_grad(b)) view(tp.grad_ref(b.id)).noalias() += view(a.value()).transpose() * view(g);
  }, "matmul");
}

Var linear(Var x, Var w, Var bias) {
  same_tape(x, w);
  same_tape(x, bias);
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const Matrix& bv = bias.value();
  if (xv.cols() != wv.rows()) shape_error("linear", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("linear(bias)", wv, bv);
  Matrix out(xv.rows(), wv.cols());
  auto o = view(out);
  o.noalias() = view(xv) * view(wv);
  o.rowwise() += view(bv).row(0);
  const Var in[] = {x, w, bias};
  return t.push(std::move(out), in, [x, w, bias](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(x)) view(tp.grad_ref(x.id)).noalias() += view(g) * view(w.value()).transpose();
    if (tp.needs_grad(w)) view(tp.grad_ref(w.id)).noalias() += view(x.value()).transpose() * view(g);
    if (tp.needs_grad(bias)) view(tp.grad_ref(bias.id)).row(0) += view(g).colwise().sum();
  }, "linear");
}

Var add(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Matrix out = av;
  view(out) += view(bv);
  const Var in[] = {a, b};
  return t.push(std::move(out), in, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(a)) view(tp.grad_ref(a.id)) += view(g);
    if (tp.needs_grad(b)) view(tp.grad_ref(b.id)) += view(g);
  }, "add");
}

Var add_rows(Var a, Var table, std::size_t offset) {
  same_tape(a, table);
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& tv = table.value();
  if (tv.cols() != av.cols() || offset + av.rows() > tv.rows()) shape_error("add_rows", av, tv);
  Matrix out = av;
  view(out) += view(tv).middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(av.rows()));
  const Var in[] = {a, table};
  return t.push(std::move(out), in, [a, table, offset](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(a)) view(tp.grad_ref(a.id)) += view(g);
    if (tp.needs_grad(table))
      view(tp.grad_ref(table.id)).middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(g.rows())) += view(g);
  }, "add_rows");
}

Var add_row(Var a, Var table, std::size_t row) {
  same_tape(a, table);
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& tv = table.value();
  if (tv.cols() != av.cols() || row >= tv.rows()) shape_error("add_row", av, tv);
  Matrix out = av;
  view(out).rowwise() += view(tv).row(static_cast<Eigen::Index>(row));
  const Var in[] = {a, table};
  return t.push(std::move(out), in, [a, table, row](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(a)) view(tp.grad_ref(a.id)) += view(g);
    if (tp.needs_grad(table))
      view(tp.grad_ref(table.id)).row(static_cast<Eigen::Index>(row)) += view(g).colwise().sum();
  }, "add_row");
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  view(out) *= s;
  const Var in[] = {a};
  return t.push(std::move(out), in, [a, s](Tape& tp, std::size_t self) {
    view(tp.grad_ref(a.id)) += s * view(tp.grad(Var{&tp, self}));
  }, "scale");
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Matrix out = av;
  view(out).array() *= view(bv).array();
  const Var in[] = {a, b};
  return t.push(std::move(out), in, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(a)) view(tp.grad_ref(a.id)).array() += view(g).array() * view(b.value()).array();
    if (tp.needs_grad(b)) view(tp.grad_ref(b.id)).array() += view(g).array() * view(a.value()).array();
  }, "mul");
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1, view(a.value()).sum());
  const Var in[] = {a};
  return t.push(std::move(out), in, [a](Tape& tp, std::size_t self) {
    view(tp.grad_ref(a.id)).array() += tp.grad(Var{&tp, self})(0, 0);
  }, "sum");
}

Var embedding_lookup(Var table, std::span<const std::int64_t> ids) {
  Tape& t = tape_of(table);
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows())
      throw DomainError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range");
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  const Var in[] = {table};
  return t.push(std::move(out), in, [table, saved = std::move(saved)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& tg = tp.grad_ref(table.id);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto src = g.row(i);
      auto dst = tg.row(static_cast<std::size_t>(saved[i]));
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  }, "embedding_lookup");
}

namespace {

// Normalizes `n` strided entries starting at p in place.
void softmax_inplace(double* p, std::size_t n, std::size_t stride) {
  double mx = p[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, p[i * stride]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i * stride] = std::exp(p[i * stride] - mx);
    total += p[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) p[i * stride] /= total;
}

// dz_i = p_i (dp_i - sum_k dp_k p_k), accumulated into dz.
void softmax_backward(const double* p, const double* dp, double* dz, std::size_t n,
                      std::size_t stride) {
  double dotp = 0.0;
  for (std::size_t i = 0; i < n; ++i) dotp += dp[i * stride] * p[i * stride];
  for (std::size_t i = 0; i < n; ++i) dz[i * stride] += p[i * stride] * (dp[i * stride] - dotp);
}

}  // namespace

Var softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw DomainError("softmax: axis must be 0 or 1");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  const std::size_t r = out.rows(), c = out.cols();
  if (axis == 1)
    for (std::size_t i = 0; i < r; ++i) softmax_inplace(out.data() + i * c, c, 1);
  else
    for (std::size_t j = 0; j < c; ++j) softmax_inplace(out.data() + j, r, c);
  const Var in[] = {a};
  return t.push(std::move(out), in, [a, axis](Tape& tp, std::size_t self) {
    const Matrix& p = tp.value(self);
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& ga = tp.grad_ref(a.id);
    const std::size_t r = p.rows(), c = p.cols();
    if (axis == 1)
      for (std::size_t i = 0; i < r; ++i)
        softmax_backward(p.data() + i * c, g.data() + i * c, ga.data() + i * c, c, 1);
    else
      for (std::size_t j = 0; j < c; ++j)
        softmax_backward(p.data() + j, g.data() + j, ga.data() + j, r, c);
  }, "softmax");
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  same_tape(a, gain);
  same_tape(a, bias);
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != c) shape_error("layer_norm(gain)", x, gain.value());
  if (bias.value().rows() != 1 || bias.value().cols() != c) shape_error("layer_norm(bias)", x, bias.value());
  Matrix stats(r, 2);  // mean, 1/stddev
  Matrix out(r, c);
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double rstd = 1.0 / std::sqrt(var + eps);
    stats(i, 0) = mean;
    stats(i, 1) = rstd;
    for (std::size_t j = 0; j < c; ++j) out(i, j) = (row[j] - mean) * rstd * gv(0, j) + bv(0, j);
  }
  const Var in[] = {a, gain, bias};
  Var y = t.push(std::move(out), in, [a, gain, bias](Tape& tp, std::size_t self) {
    const Matrix& x = a.value();
    const Matrix& st = tp.aux(self);
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& gv = gain.value();
    const std::size_t r = x.rows(), c = x.cols();
    const bool need_x = tp.needs_grad(a), need_g = tp.needs_grad(gain), need_b = tp.needs_grad(bias);
    Matrix* gx = need_x ? &tp.grad_ref(a.id) : nullptr;
    Matrix* gg = need_g ? &tp.grad_ref(gain.id) : nullptr;
    Matrix* gb = need_b ? &tp.grad_ref(bias.id) : nullptr;
    std::vector<double> xhat(c), dxhat(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double mean = st(i, 0), rstd = st(i, 1);
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        xhat[j] = (x(i, j) - mean) * rstd;
        dxhat[j] = g(i, j) * gv(0, j);
        m1 += dxhat[j];
        m2 += dxhat[j] * xhat[j];
        if (need_g) (*gg)(0, j) += g(i, j) * xhat[j];
        if (need_b) (*gb)(0, j) += g(i, j);
      }
      if (!need_x) continue;
      m1 /= static_cast<double>(c);
      m2 /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) (*gx)(i, j) += rstd * (dxhat[j] - m1 - xhat[j] * m2);
    }
  }, "layer_norm");
  t.aux(y.id) = std::move(stats);
  return y;
}

constexpr double kInvSqrt2 = 0.7071067811865476;

Var gelu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  const Var in[] = {a};
  return t.push(std::move(out), in, [a](Tape& tp, std::size_t self) {
    const Matrix& x = a.value();
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& ga = tp.grad_ref(a.id);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      ga.data()[i] += g.data()[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw DomainError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DomainError("concat: axis must be 0 or 1");
  Tape& t = tape_of(parts[0]);
  std::size_t rows = 0, cols = 0;
  for (Var p : parts) {
    same_tape(parts[0], p);
    const Matrix& v = p.value();
    if (axis == 0) {
      if (rows > 0 && v.cols() != cols) shape_error("concat", parts[0].value(), v);
      rows += v.rows();
      cols = v.cols();
    } else {
      if (cols > 0 && v.rows() != rows) shape_error("concat", parts[0].value(), v);
      cols += v.cols();
      rows = v.rows();
    }
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      view(out).middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(v.rows())) = view(v);
      off += v.rows();
    } else {
      cols_view(out, off, v.cols()) = view(v);
      off += v.cols();
    }
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [saved, axis](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    std::size_t off = 0;
    for (Var p : saved) {
      const Matrix& v = p.value();
      const std::size_t len = axis == 0 ? v.rows() : v.cols();
      if (tp.needs_grad(p)) {
        if (axis == 0)
          view(tp.grad_ref(p.id)) += view(g).middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(len));
        else
          view(tp.grad_ref(p.id)) += cols_view(g, off, len);
      }
      off += len;
    }
  }, "concat");
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  if (axis != 0 && axis != 1) throw DomainError("slice: axis must be 0 or 1");
  Tape& t = tape_of(a);
  const Matrix& v = a.value();
  const std::size_t extent = axis == 0 ? v.rows() : v.cols();
  if (begin >= end || end > extent) throw DomainError("slice: range out of bounds");
  const std::size_t len = end - begin;
  Matrix out = axis == 0 ? Matrix(len, v.cols()) : Matrix(v.rows(), len);
  if (axis == 0)
    view(out) = view(v).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len));
  else
    view(out) = cols_view(v, begin, len);
  const Var in[] = {a};
  return t.push(std::move(out), in, [a, axis, begin, len](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& ga = tp.grad_ref(a.id);
    if (axis == 0)
      view(ga).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len)) += view(g);
    else
      cols_view(ga, begin, len) += view(g);
  }, "slice");
}

Var attention_probs(Var qkv, std::size_t q_col, std::size_t k_col, std::size_t dk) {
  Tape& t = tape_of(qkv);
  const Matrix& x = qkv.value();
  if (dk == 0 || q_col + dk > x.cols() || k_col + dk > x.cols())
    throw DomainError("attention_probs: head columns out of range");
  const std::size_t s = x.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix probs(s, s);
  view(probs).noalias() = scale * cols_view(x, q_col, dk) * cols_view(x, k_col, dk).transpose();
  for (std::size_t i = 0; i < s; ++i) softmax_inplace(probs.data() + i * s, s, 1);
  const Var in[] = {qkv};
  return t.push(std::move(probs), in, [qkv, q_col, k_col, dk, scale](Tape& tp, std::size_t self) {
    const Matrix& p = tp.value(self);
    const Matrix& g = tp.grad(Var{&tp, self});
    const std::size_t s = p.rows();
    Matrix dz(s, s);
    for (std::size_t i = 0; i < s; ++i)
      softmax_backward(p.data() + i * s, g.data() + i * s, dz.data() + i * s, s, 1);
    const Matrix& x = qkv.value();
    Matrix& gx = tp.grad_ref(qkv.id);
    cols_view(gx, q_col, dk).noalias() += scale * view(dz) * cols_view(x, k_col, dk);
    cols_view(gx, k_col, dk).noalias() += scale * view(dz).transpose() * cols_view(x, q_col, dk);
  }, "attention_probs");
}

Var attend(Var probs, Var qkv, std::size_t v_col, std::size_t dk) {
  same_tape(probs, qkv);
  Tape& t = tape_of(probs);
  const Matrix& p = probs.value();
  const Matrix& x = qkv.value();
  if (p.cols() != x.rows() || v_col + dk > x.cols()) shape_error("attend", p, x);
  Matrix out(p.rows(), dk);
  view(out).noalias() = view(p) * cols_view(x, v_col, dk);
  const Var in[] = {probs, qkv};
  return t.push(std::move(out), in, [probs, qkv, v_col, dk](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.needs_grad(probs))
      view(tp.grad_ref(probs.id)).noalias() += view(g) * cols_view(qkv.value(), v_col, dk).transpose();
    if (tp.needs_grad(qkv))
      cols_view(tp.grad_ref(qkv.id), v_col, dk).noalias() += view(probs.value()).transpose() * view(g);
  }, "attend");
}

namespace {

double rel_error(double a, double b, double scale) {
  return std::abs(a - b) / std::max(kGradFloor * std::max(1.0, std::abs(scale)), std::abs(a) + std::abs(b));
}

std::vector<std::size_t> probe_coords(std::size_t size, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (max_coords == 0 || size <= max_coords) {
    idx.resize(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    return idx;
  }
  // Stride chosen coprime-ish with typical row widths so probes spread over
  // rows and columns.
  const std::size_t stride = size / max_coords;
  for (std::size_t k = 0; k < max_coords; ++k) idx.push_back((k * stride + k * 7) % size);
  return idx;
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps) {
  Matrix analytic;
  double scale = 0.0;
  {
    Tape tape;
    Var in = tape.leaf(x);
    Var out = f(tape, in);
    scale = out.scalar();
    tape.backward(out);
    analytic = tape.grad(in);
    if (analytic.empty()) analytic = Matrix(x.rows(), x.cols());
  }
  auto eval = [&](const Matrix& point) {
    Tape tape;
    Var in = tape.leaf(point);
    return f(tape, in).scalar();
  };
  double worst = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double fp = eval(probe);
    probe.data()[i] = orig - eps;
    const double fm = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite difference");
    worst = std::max(worst, rel_error(analytic.data()[i], numeric, scale));
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                         double eps, std::size_t max_coords_per_param) {
  for (Parameter* p : params) p->zero_grad();
  double scale = 0.0;
  {
    Tape tape;
    Var out = f(tape);
    scale = out.scalar();
    tape.backward(out);
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).scalar();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (std::size_t i : probe_coords(p->value.size(), max_coords_per_param)) {
      double& slot = p->value.data()[i];
      const double orig = slot;
      slot = orig + eps;
      const double fp = eval();
      slot = orig - eps;
      const double fm = eval();
      slot = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite difference");
      worst = std::max(worst, rel_error(analytic.data()[i], numeric, scale));
    }
  }
  return worst;
}

}  // namespace momentloc::diffmath
