// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace momentloc {

struct MemoryReport {
  double duration_s = 0.0;
  std::string mode;  // sampler name, or "none" without sampling
  std::int64_t analytic_bytes = 0;
  std::int64_t measured_bytes = 0;
  /// Joint sequence length m + 2 + v fed to the localization blocks.
  std::int64_t sequence_len = 0;
  std::int64_t source_len = 0;  // n
};

/// Per-position activation scalars per localization layer, in units of
/// d_model. Counts the pre-norm block (two layer norms, packed QKV, head
/// outputs, merge, projection, two residuals, the ffn_mult-wide MLP) plus the
/// embedding and scoring stages spread over the layers. The per-row
/// layer-norm statistics are folded in as 4/d_model.
double block_activation_constant(const ModelConfig& cfg);

/// batch * L * [M * S^2 + c1 * S * d_model] * bytes_per_scalar with
/// S = text_len + 2 + video_len; the part that scales with the input.
std::int64_t analytic_activation_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                       std::int64_t video_len, std::int64_t batch,
                                       std::int64_t bytes_per_scalar);

/// Activation term plus the bytes of every model parameter.
std::int64_t analytic_peak_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                 std::int64_t video_len, std::int64_t batch,
                                 std::int64_t bytes_per_scalar);

/// Attention-probability storage alone: a hard lower bound on activations.
std::int64_t analytic_lower_bound_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                        std::int64_t video_len, std::int64_t batch,
                                        std::int64_t bytes_per_scalar);

/// High-water mark of tensor payload bytes allocated while `workload` runs.
std::int64_t measured_peak_bytes(const std::function<void()>& workload);

struct BenchOptions {
  double fps = 25.0;
  std::int64_t frames_per_feature = 16;  // 25/16 features per second
  std::int64_t text_len = 8;
  std::uint64_t seed = 0;
};

/// Features per second of synthetic video.
inline double feature_rate(const BenchOptions& o) {
  return o.fps / static_cast<double>(o.frames_per_feature);
}

/// Duration at which n first exceeds b.
double saturation_duration(std::int64_t b, double features_per_second);

/// One report per (duration, mode); a forward pass through the query encoder
/// and localization module on synthetic features, with "none" feeding every
/// feature. max_video_len is raised as needed to fit unsampled inputs.
std::vector<MemoryReport> bench_curve(std::span<const double> durations,
                                      std::span<const std::string> modes, ModelConfig cfg,
                                      const BenchOptions& opts = {});

inline constexpr const char* kBenchCsvHeader = "duration_s,mode,analytic_bytes,measured_bytes,seq_len";
void write_bench_csv(std::ostream& os, std::span<const MemoryReport> reports);

}  // namespace momentloc
