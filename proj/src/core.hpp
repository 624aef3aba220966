// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "matrix.hpp"

namespace momentloc {

/// n video features of width d_v plus the frame-rate metadata of the source.
class FeatureSequence {
 public:
  FeatureSequence() = default;
  /// Throws DomainError on empty or non-finite features, fps <= 0 or
  /// frame_count < 1.
  FeatureSequence(Matrix features, double fps, std::int64_t frame_count);

  const Matrix& features() const noexcept { return features_; }
  std::int64_t length() const noexcept { return static_cast<std::int64_t>(features_.rows()); }
  std::int64_t width() const noexcept { return static_cast<std::int64_t>(features_.cols()); }
  double fps() const noexcept { return fps_; }
  std::int64_t frame_count() const noexcept { return frame_count_; }
  double duration() const noexcept { return static_cast<double>(frame_count_) / fps_; }

 private:
  Matrix features_;
  double fps_ = 1.0;
  std::int64_t frame_count_ = 1;
};

struct Span {
  double start = 0.0;
  double end = 0.0;

  double length() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Query plus ground-truth moment, in seconds and in 1-based feature indices.
struct MomentAnnotation {
  std::vector<std::int32_t> query_tokens;
  double start_s = 0.0;
  double end_s = 0.0;
  std::int64_t feat_start = 1;
  std::int64_t feat_end = 1;

  Span span() const noexcept { return {start_s, end_s}; }
};

struct SpanPair {
  Span pred;
  Span gt;
};

/// R@alpha counts tIoU >= alpha.
inline constexpr bool kRecallInclusive = true;

/// Maps a time in seconds onto a 1-based feature index:
/// clamp(round_half_up(t * fps * n / l), 1, n).
std::int64_t frame_time_to_feature_index(double t, const FeatureSequence& seq);

/// Builds an annotation, deriving the feature indices from the seconds.
/// Requires 0 <= start_s < end_s <= duration.
MomentAnnotation make_annotation(const FeatureSequence& seq, std::vector<std::int32_t> tokens,
                                 double start_s, double end_s);

/// Seconds covered by bucket k (1-based) of m equally sized buckets.
Span bucket_index_to_span(std::int64_t k, std::int64_t m_buckets, double duration);

double tiou(const Span& a, const Span& b);
double recall_at(double alpha, std::span<const SpanPair> pairs);
double mean_iou(std::span<const SpanPair> pairs);

}  // namespace momentloc
