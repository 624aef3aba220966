// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace momentloc {

FeatureSequence::FeatureSequence(Matrix features, double fps, std::int64_t frame_count)
    : features_(std::move(features)), fps_(fps), frame_count_(frame_count) {
  if (features_.rows() == 0 || features_.cols() == 0)
    throw DomainError("FeatureSequence: need n >= 1 and d_v >= 1");
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) throw DomainError("FeatureSequence: fps must be > 0");
  if (frame_count_ < 1) throw DomainError("FeatureSequence: frame_count must be >= 1");
  for (double v : features_.values())
    if (!std::isfinite(v)) throw DomainError("FeatureSequence: non-finite feature value");
}

std::int64_t frame_time_to_feature_index(double t, const FeatureSequence& seq) {
  const double duration = seq.duration();
  const double slack = 1e-9 * std::max(1.0, duration);
  if (!(t >= -slack && t <= duration + slack))
    throw DomainError("frame_time_to_feature_index: t=" + std::to_string(t) +
                      " outside [0, duration]");
  const double n = static_cast<double>(seq.length());
  const double tau = t * seq.fps() * n / static_cast<double>(seq.frame_count());
  const auto idx = static_cast<std::int64_t>(std::floor(tau + 0.5));
  return std::clamp<std::int64_t>(idx, 1, seq.length());
}

MomentAnnotation make_annotation(const FeatureSequence& seq, std::vector<std::int32_t> tokens,
                                 double start_s, double end_s) {
  if (tokens.empty()) throw DomainError("make_annotation: empty query");
  if (!(start_s >= 0.0 && start_s < end_s && end_s <= seq.duration() * (1.0 + 1e-12)))
    throw DomainError("make_annotation: need 0 <= start < end <= duration");
  MomentAnnotation ann;
  ann.query_tokens = std::move(tokens);
  ann.start_s = start_s;
  ann.end_s = end_s;
  ann.feat_start = frame_time_to_feature_index(start_s, seq);
  ann.feat_end = std::max(ann.feat_start, frame_time_to_feature_index(end_s, seq));
  return ann;
}

Span bucket_index_to_span(std::int64_t k, std::int64_t m_buckets, double duration) {
  if (m_buckets < 1 || k < 1 || k > m_buckets)
    throw DomainError("bucket_index_to_span: bucket " + std::to_string(k) + " not in [1, " +
                      std::to_string(m_buckets) + "]");
  const double w = duration / static_cast<double>(m_buckets);
  return {static_cast<double>(k - 1) * w, static_cast<double>(k) * w};
}

double tiou(const Span& a, const Span& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return uni > 0.0 ? inter / uni : 0.0;
}

double recall_at(double alpha, std::span<const SpanPair> pairs) {
  if (pairs.empty()) throw DomainError("recall_at: empty pair list");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("recall_at: alpha must be in (0, 1)");
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    const double v = tiou(p.pred, p.gt);
    if (kRecallInclusive ? v >= alpha : v > alpha) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double mean_iou(std::span<const SpanPair> pairs) {
  if (pairs.empty()) throw DomainError("mean_iou: empty pair list");
  double total = 0.0;
  for (const auto& p : pairs) total += tiou(p.pred, p.gt);
  return total / static_cast<double>(pairs.size());
}

}  // namespace momentloc
