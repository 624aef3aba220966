// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace momentloc {

enum class SamplerMode { sbfs, max, mean, random, frvs, dtw, drfs, passthrough };

std::string_view to_string(SamplerMode mode);
/// Accepts the canonical names plus "none" for passthrough. Throws UsageError.
SamplerMode parse_sampler_mode(std::string_view name);

/// Inclusive 1-based index range of one bucket.
struct BucketRange {
  std::int64_t lo = 1;
  std::int64_t hi = 1;
  std::int64_t size() const noexcept { return hi - lo + 1; }
  friend bool operator==(const BucketRange&, const BucketRange&) = default;
};

// Contiguous partition of [1..n] into m_buckets <= b buckets. Uniform plans
// come from make_bucket_plan; data-driven samplers (random, dtw, drfs) build
// non-uniform ones through from_bounds.
class BucketPlan {
 public:
  BucketPlan() = default;

  /// Validates that `bounds` partition [1..n] in order. Throws DomainError.
  static BucketPlan from_bounds(std::int64_t n, std::int64_t b, std::vector<BucketRange> bounds);

  std::int64_t n() const noexcept { return n_; }
  std::int64_t budget() const noexcept { return b_; }
  /// ceil(n/b) for uniform plans (1 for passthrough); 0 for data-driven plans.
  std::int64_t width() const noexcept { return width_; }
  std::int64_t m_buckets() const noexcept { return static_cast<std::int64_t>(bounds_.size()); }
  bool uniform() const noexcept { return uniform_; }
  bool passthrough() const noexcept { return uniform_ && width_ == 1; }
  const std::vector<BucketRange>& bounds() const noexcept { return bounds_; }
  const BucketRange& bucket(std::int64_t k) const { return bounds_.at(static_cast<std::size_t>(k - 1)); }

  /// 1-based bucket containing source index `idx`.
  std::int64_t bucket_of(std::int64_t idx) const;

 private:
  friend BucketPlan make_bucket_plan(std::int64_t n, std::int64_t b);

  std::int64_t n_ = 0;
  std::int64_t b_ = 0;
  std::int64_t width_ = 0;
  bool uniform_ = false;
  std::vector<BucketRange> bounds_;
};

/// m(n,b) = floor(n / ceil(n/b)) buckets of width ceil(n/b); the last bucket
/// absorbs the tail so every index is covered. n <= b gives a passthrough plan.
BucketPlan make_bucket_plan(std::int64_t n, std::int64_t b);

struct SampledSequence {
  Matrix features;                         // m_buckets x d_v
  std::vector<std::int64_t> source_index;  // per bucket; empty for pooled modes
  SamplerMode mode = SamplerMode::sbfs;
  BucketPlan plan;

  std::int64_t rows() const noexcept { return static_cast<std::int64_t>(features.rows()); }
};

enum class Pool { max, mean };

SampledSequence sbfs_sample(const FeatureSequence& seq, const BucketPlan& plan, Rng& rng);
SampledSequence pool_infer(const FeatureSequence& seq, const BucketPlan& plan, Pool pool);

/// Bucket indices holding the annotation's start and end features.
std::pair<std::int64_t, std::int64_t> remap_labels(const MomentAnnotation& ann,
                                                   const BucketPlan& plan);

/// b distinct indices, uniformly without replacement, in ascending order.
/// Position k owns the source range [f(k), f(k+1)-1] (first from 1, last to n).
SampledSequence random_sample(const FeatureSequence& seq, std::int64_t b, Rng& rng);

/// Keeps every round(fps/target_fps)-th feature and rescales the metadata.
FeatureSequence frvs_decimate(const FeatureSequence& seq, double target_fps);

/// D[i][j] = 1 - cos(g_i, g_j). Throws DomainError on a zero-norm row.
Matrix cosine_distance_matrix(const FeatureSequence& seq);

/// Greedy cosine grouping with a loosening threshold: a feature joins the open
/// bucket while its cosine similarity to the bucket head is >= th. th starts
/// at th0 and drops by `step` until at most b buckets remain; below 0 the
/// uniform plan is returned.
BucketPlan drfs_buckets(const FeatureSequence& seq, std::int64_t b, double th0 = 1.0,
                        double step = 0.01);

/// Warping path (0-based (source, reference) pairs from (0,0) to (n-1,m-1))
/// minimizing the summed cost with steps right, down and diagonal.
std::vector<std::pair<std::int64_t, std::int64_t>> dtw_path(const Matrix& cost);

/// Buckets from a DTW alignment of the source rows to the max-pooled uniform
/// plan; each source index goes to the earliest reference row it aligns to.
BucketPlan dtw_buckets(const FeatureSequence& seq, std::int64_t b);

struct SamplerSettings {
  SamplerMode mode = SamplerMode::sbfs;
  std::int64_t buckets = 16;
  /// Inference pooling for sbfs/frvs/dtw/drfs: max, mean or sbfs (stochastic).
  SamplerMode infer_mode = SamplerMode::max;
  double frvs_target_fps = 5.0;
  double drfs_th0 = 1.0;
  double drfs_step = 0.01;
};

enum class Phase { train, infer };

struct PreparedExample {
  SampledSequence sampled;
  std::int64_t start_bucket = 1;
  std::int64_t end_bucket = 1;
  double duration = 0.0;
};

/// Runs the configured sampler. Bucketed samplers draw one feature per bucket
/// in the train phase and reduce with infer_mode in the infer phase. The plan
/// of the result always indexes `seq`, including for frvs.
SampledSequence apply_sampler(const FeatureSequence& seq, const SamplerSettings& settings, Phase phase,
                              Rng& rng);

/// Applies the configured sampler for the given phase and remaps the labels
/// onto the resulting buckets.
PreparedExample prepare_example(const FeatureSequence& seq, const MomentAnnotation& ann,
                                const SamplerSettings& settings, Phase phase, Rng& rng);

}  // namespace momentloc
