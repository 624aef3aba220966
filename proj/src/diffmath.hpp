// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace momentloc::diffmath {

/// A trainable tensor living outside any tape. Tapes reference the value
/// without copying and accumulate into `grad` during backward.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
};

// Records one forward pass. Nodes are appended in evaluation order; backward
// walks them in reverse. A tape owns its activations and is discarded after
// use, so no state survives between passes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(std::size_t id) const;
  const Matrix& value(Var v) const { return value(v.id); }
  /// Gradient reached by the last backward; empty when none flowed here.
  const Matrix& grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-implementer interface.
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn, const char* op);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id); }
  /// Gradient accumulator for a node, zero-allocated on first use.
  Matrix& grad_ref(std::size_t id);
  Matrix& aux(std::size_t id) { return nodes_[id].aux; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    Matrix aux;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// Kernels. Shapes are (rows x cols); row vectors are 1 x c.

/// a (r x k) * b (k x c)
Var matmul(Var a, Var b);
/// x (r x k) * w (k x c) + bias (1 x c)
Var linear(Var x, Var w, Var bias);
Var add(Var a, Var b);
/// a + table[offset : offset + a.rows]
Var add_rows(Var a, Var table, std::size_t offset);
/// a + table[row], broadcast over every row of a.
Var add_row(Var a, Var table, std::size_t row);
Var scale(Var a, double s);
Var mul(Var a, Var b);
Var sum(Var a);
Var embedding_lookup(Var table, std::span<const std::int64_t> ids);
/// axis 1 normalizes each row, axis 0 each column.
Var softmax(Var a, int axis);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Exact GELU, x * Phi(x).
Var gelu(Var a);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);

/// Row-stochastic attention for one head over a packed [Q | K | V] matrix:
/// softmax(Q_h K_h^T / sqrt(dk)) with Q_h = cols [q_col, q_col+dk) and
/// K_h = cols [k_col, k_col+dk). Only the probability matrix is stored.
Var attention_probs(Var qkv, std::size_t q_col, std::size_t k_col, std::size_t dk);
/// probs (S x S) * cols [v_col, v_col+dk) of qkv.
Var attend(Var probs, Var qkv, std::size_t v_col, std::size_t dk);

/// Throws NumericError if any value is NaN/Inf.
void check_finite(const Matrix& m, const char* op);

inline constexpr double kGradFloor = 1e-6;

/// Central-difference check of d f / d x. Returns the largest
/// |a - b| / max(kGradFloor * max(1, |f|), |a| + |b|) over coordinates.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps = 1e-5);

/// The same check against parameters referenced by `f`. When
/// `max_coords_per_param` is non-zero, large tensors are probed at that many
/// evenly strided coordinates instead of every one.
double grad_check_params(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                         double eps = 1e-5, std::size_t max_coords_per_param = 0);

}  // namespace momentloc::diffmath
