// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace momentloc {

using diffmath::Tape;
using diffmath::Var;

SoftLabel make_soft_labels(std::int64_t center, std::int64_t b, std::int64_t width) {
  if (b < 1 || center < 1 || center > b) throw DomainError("make_soft_labels: center outside [1, b]");
  if (width < 0) throw DomainError("make_soft_labels: width must be >= 0");
  SoftLabel label;
  label.center = center;
  label.width = width;
  label.dist.resize(static_cast<std::size_t>(b));
  double total = 0.0;
  for (std::int64_t i = 1; i <= b; ++i) {
    const double w = std::max(
        0.0, 1.0 - static_cast<double>(std::abs(i - center)) / static_cast<double>(width + 1));
    label.dist[static_cast<std::size_t>(i - 1)] = w;
    total += w;
  }
  for (double& w : label.dist) w /= total;
  return label;
}

GuidanceVector make_guidance(std::size_t text_positions, std::int64_t video_len,
                             std::int64_t start_bucket, std::int64_t end_bucket) {
  if (video_len < 1 || start_bucket < 1 || start_bucket > end_bucket || end_bucket > video_len)
    throw DomainError("make_guidance: need 1 <= start <= end <= video length");
  GuidanceVector g;
  g.text_positions = text_positions;
  g.x.assign(text_positions + static_cast<std::size_t>(video_len), 0.0);
  std::fill_n(g.x.begin(), text_positions, 1.0);
  for (std::int64_t k = start_bucket; k <= end_bucket; ++k)
    g.x[text_positions + static_cast<std::size_t>(k - 1)] = 1.0;
  return g;
}

Var kl_loss(Var pred, const SoftLabel& target) {
  Tape& t = *pred.tape;
  const Matrix& p = pred.value();
  if (p.size() != target.dist.size())
    throw DomainError("kl_loss: prediction has " + std::to_string(p.size()) +
                      " entries, target " + std::to_string(target.dist.size()));
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double ti = target.dist[i];
    if (ti > 0.0) loss += ti * (std::log(ti) - std::log(std::max(p.data()[i], kProbFloor)));
  }
  const Var in[] = {pred};
  return t.push(Matrix(1, 1, loss), in, [pred, dist = target.dist](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{&tp, self})(0, 0);
    const Matrix& p = pred.value();
    Matrix& gp = tp.grad_ref(pred.id);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pi = p.data()[i];
      if (dist[i] > 0.0 && pi > kProbFloor) gp.data()[i] -= g * dist[i] / pi;
    }
  }, "kl_loss");
}

Var attention_guidance_loss(std::span<const Var> attention, const GuidanceVector& guidance) {
  if (attention.empty()) throw DomainError("attention_guidance_loss: no attention matrices");
  Tape& t = *attention[0].tape;
  const std::size_t s = guidance.x.size();
  const auto& x = guidance.x;
  double loss = 0.0;
  for (Var a : attention) {
    const Matrix& av = a.value();
    if (av.rows() != s || av.cols() != s)
      throw DomainError("attention_guidance_loss: attention is " + std::to_string(av.rows()) + "x" +
                        std::to_string(av.cols()) + ", guidance has length " + std::to_string(s));
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        if (x[i] * x[j] == 0.0) loss -= std::log1p(-std::min(av(i, j), kAttentionCeil));
  }
  std::vector<Var> saved(attention.begin(), attention.end());
  return t.push(Matrix(1, 1, loss), attention, [saved, x](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{&tp, self})(0, 0);
    const std::size_t s = x.size();
    for (Var a : saved) {
      if (!tp.needs_grad(a)) continue;
      const Matrix& av = a.value();
      Matrix& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
          if (x[i] * x[j] == 0.0 && av(i, j) < kAttentionCeil) ga(i, j) += g / (1.0 - av(i, j));
    }
  }, "attention_guidance_loss");
}

Var temporal_order_loss(Var start_probs, Var end_probs, bool literal_min) {
  Tape& t = *start_probs.tape;
  const Matrix& ps = start_probs.value();
  const Matrix& pe = end_probs.value();
  if (ps.size() != pe.size()) throw DomainError("temporal_order_loss: length mismatch");
  double diff = 0.0;  // E[S] - E[E]
  for (std::size_t i = 0; i < ps.size(); ++i)
    diff += static_cast<double>(i + 1) * (ps.data()[i] - pe.data()[i]);
  const bool active = literal_min ? diff < 0.0 : diff > 0.0;
  const double loss = active ? diff : 0.0;
  const Var in[] = {start_probs, end_probs};
  return t.push(Matrix(1, 1, loss), in, [start_probs, end_probs, active](Tape& tp, std::size_t self) {
    if (!active) return;
    const double g = tp.grad(Var{&tp, self})(0, 0);
    const std::size_t b = start_probs.value().size();
    if (tp.needs_grad(start_probs)) {
      Matrix& gs = tp.grad_ref(start_probs.id);
      for (std::size_t i = 0; i < b; ++i) gs.data()[i] += g * static_cast<double>(i + 1);
    }
    if (tp.needs_grad(end_probs)) {
      Matrix& ge = tp.grad_ref(end_probs.id);
      for (std::size_t i = 0; i < b; ++i) ge.data()[i] -= g * static_cast<double>(i + 1);
    }
  }, "temporal_order_loss");
}

Var total_loss(Var kl_start, Var kl_end, Var att, Var se) {
  for (Var v : {kl_start, kl_end, att, se})
    if (!std::isfinite(v.scalar())) throw NumericError("total_loss: non-finite component");
  return diffmath::add(diffmath::add(kl_start, kl_end), diffmath::add(att, se));
}

}  // namespace momentloc
