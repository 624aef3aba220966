// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffmath.hpp"

namespace momentloc {

/// Target distribution over b bucket positions, peaked at `center`.
struct SoftLabel {
  std::vector<double> dist;
  std::int64_t center = 1;
  std::int64_t width = 0;
};

/// Which cells of the joint sequence the attention loss leaves alone:
/// every text position (framing tokens included) plus the target buckets.
struct GuidanceVector {
  std::vector<double> x;
  std::size_t text_positions = 0;
};

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kAttentionCeil = 1.0 - 1e-6;

/// Triangular kernel w_i = max(0, 1 - |i - center| / (width + 1)), renormalized.
SoftLabel make_soft_labels(std::int64_t center, std::int64_t b, std::int64_t width);

GuidanceVector make_guidance(std::size_t text_positions, std::int64_t video_len,
                             std::int64_t start_bucket, std::int64_t end_bucket);

/// sum_i t_i log(t_i / max(p_i, 1e-12)). `pred` may be any shape of size b.
diffmath::Var kl_loss(diffmath::Var pred, const SoftLabel& target);

/// -sum over heads and cells with x_i x_j = 0 of log(1 - min(A_ij, 1 - 1e-6)).
diffmath::Var attention_guidance_loss(std::span<const diffmath::Var> attention,
                                      const GuidanceVector& guidance);

/// Hinge max(0, E[S] - E[E]) with positions counted from 1. With
/// `literal_min` set, min(0, E[S] - E[E]) instead.
diffmath::Var temporal_order_loss(diffmath::Var start_probs, diffmath::Var end_probs,
                                  bool literal_min = false);

/// Unweighted sum kl_s + kl_e + att + se. Throws NumericError on a non-finite
/// component.
diffmath::Var total_loss(diffmath::Var kl_start, diffmath::Var kl_end, diffmath::Var att,
                         diffmath::Var se);

}  // namespace momentloc
