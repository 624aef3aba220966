// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace momentloc {

double block_activation_constant(const ModelConfig& cfg) {
  const double d = static_cast<double>(cfg.d_model);
  const double block = 11.0 + 2.0 * static_cast<double>(cfg.ffn_mult) + 4.0 / d;
  // Video projection, position and type adds, concat, final norm, slice and
  // the two scoring heads, plus the input copy and the sampler output.
  const double stages = 10.0 + 2.0 * static_cast<double>(cfg.d_video) / d;
  return block + stages / static_cast<double>(cfg.loc_layers);
}

std::int64_t analytic_activation_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                       std::int64_t video_len, std::int64_t batch,
                                       std::int64_t bytes_per_scalar) {
  if (text_len < 1 || video_len < 1 || batch < 1 || bytes_per_scalar < 1)
    throw DomainError("analytic_activation_bytes: counts must be >= 1");
  const double s = static_cast<double>(text_len + kTextSpecials + video_len);
  const double per_layer = static_cast<double>(cfg.loc_heads) * s * s +
                           block_activation_constant(cfg) * s * static_cast<double>(cfg.d_model);
  return std::llround(static_cast<double>(batch * cfg.loc_layers * bytes_per_scalar) * per_layer);
}

std::int64_t analytic_peak_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                 std::int64_t video_len, std::int64_t batch,
                                 std::int64_t bytes_per_scalar) {
  const Model shape_only(cfg, 0);
  return analytic_activation_bytes(cfg, text_len, video_len, batch, bytes_per_scalar) +
         static_cast<std::int64_t>(shape_only.parameter_count()) * bytes_per_scalar;
}

std::int64_t analytic_lower_bound_bytes(const ModelConfig& cfg, std::int64_t text_len,
                                        std::int64_t video_len, std::int64_t batch,
                                        std::int64_t bytes_per_scalar) {
  const std::int64_t s = text_len + kTextSpecials + video_len;
  return batch * cfg.loc_layers * cfg.loc_heads * s * s * bytes_per_scalar;
}

std::int64_t measured_peak_bytes(const std::function<void()>& workload) {
  AllocationScope scope;
  workload();
  return scope.peak_bytes();
}

double saturation_duration(std::int64_t b, double features_per_second) {
  if (b < 1 || !(features_per_second > 0.0)) throw DomainError("saturation_duration: bad arguments");
  return static_cast<double>(b) / features_per_second;
}

std::vector<MemoryReport> bench_curve(std::span<const double> durations,
                                      std::span<const std::string> modes, ModelConfig cfg,
                                      const BenchOptions& opts) {
  if (!std::is_sorted(durations.begin(), durations.end()))
    throw DomainError("bench_curve: durations must be sorted ascending");
  const double rate = feature_rate(opts);
  auto length_for = [&](double duration) {
    return std::max<std::int64_t>(1, std::llround(duration * rate));
  };
  std::vector<SamplerMode> parsed;
  for (const auto& m : modes) parsed.push_back(parse_sampler_mode(m));
  for (double d : durations) cfg.max_video_len = std::max(cfg.max_video_len, length_for(d));

  Model model(cfg, opts.seed);
  std::vector<std::int32_t> tokens(static_cast<std::size_t>(opts.text_len));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<std::int32_t>(i % static_cast<std::size_t>(cfg.vocab));
  Matrix text_states;
  {
    diffmath::Tape tape;
    text_states = model.text_encode(tape, tokens).value();
  }

  std::vector<MemoryReport> reports;
  for (std::size_t di = 0; di < durations.size(); ++di) {
    const double duration = durations[di];
    const std::int64_t n = length_for(duration);
    Rng data_rng(opts.seed + 7919 * (di + 1));
    Matrix feats(static_cast<std::size_t>(n), static_cast<std::size_t>(cfg.d_video));
    for (double& v : feats.values()) v = data_rng.normal();
    const auto frames = std::max<std::int64_t>(1, std::llround(duration * opts.fps));
    const FeatureSequence seq(std::move(feats), opts.fps, frames);
    const MomentAnnotation ann = make_annotation(seq, {0}, 0.0, seq.duration());

    for (std::size_t mi = 0; mi < parsed.size(); ++mi) {
      SamplerSettings settings;
      settings.mode = parsed[mi];
      settings.buckets = cfg.buckets;
      Rng rng(opts.seed);
      std::int64_t video_len = 0;
      const std::int64_t peak = measured_peak_bytes([&] {
        PreparedExample ex = prepare_example(seq, ann, settings, Phase::train, rng);
        video_len = ex.sampled.rows();
        diffmath::Tape tape;
        model.localize(tape, tape.constant(text_states), ex.sampled.features);
      });
      MemoryReport r;
      r.duration_s = duration;
      r.mode = parsed[mi] == SamplerMode::passthrough ? "none" : std::string(to_string(parsed[mi]));
      r.measured_bytes = peak;
      r.analytic_bytes = analytic_activation_bytes(cfg, opts.text_len, video_len, 1, sizeof(double)) +
                         static_cast<std::int64_t>(model.parameter_count() * sizeof(double));
      r.sequence_len = opts.text_len + kTextSpecials + video_len;
      r.source_len = n;
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

void write_bench_csv(std::ostream& os, std::span<const MemoryReport> reports) {
  os << kBenchCsvHeader << '\n';
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%g", r.duration_s);
    os << buf << ',' << r.mode << ',' << r.analytic_bytes << ',' << r.measured_bytes << ','
       << r.sequence_len << '\n';
  }
}

}  // namespace momentloc
