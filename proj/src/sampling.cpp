// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace momentloc {

std::string_view to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::sbfs: return "sbfs";
    case SamplerMode::max: return "max";
    case SamplerMode::mean: return "mean";
    case SamplerMode::random: return "random";
    case SamplerMode::frvs: return "frvs";
    case SamplerMode::dtw: return "dtw";
    case SamplerMode::drfs: return "drfs";
    case SamplerMode::passthrough: return "passthrough";
  }
  return "?";
}

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "sbfs") return SamplerMode::sbfs;
  if (name == "max") return SamplerMode::max;
  if (name == "mean") return SamplerMode::mean;
  if (name == "random") return SamplerMode::random;
  if (name == "frvs") return SamplerMode::frvs;
  if (name == "dtw") return SamplerMode::dtw;
  if (name == "drfs") return SamplerMode::drfs;
  if (name == "passthrough" || name == "none") return SamplerMode::passthrough;
  throw UsageError("unknown sampler mode '" + std::string(name) + "'");
}

BucketPlan BucketPlan::from_bounds(std::int64_t n, std::int64_t b,
                                   std::vector<BucketRange> bounds) {
  if (n < 1 || b < 1) throw DomainError("BucketPlan: n and b must be >= 1");
  if (bounds.empty() || static_cast<std::int64_t>(bounds.size()) > b)
    throw DomainError("BucketPlan: bucket count must be in [1, b]");
  std::int64_t next = 1;
  for (const auto& r : bounds) {
    if (r.lo != next || r.hi < r.lo) throw DomainError("BucketPlan: buckets must partition [1..n]");
    next = r.hi + 1;
  }
  if (next != n + 1) throw DomainError("BucketPlan: buckets must cover [1..n]");
  BucketPlan plan;
  plan.n_ = n;
  plan.b_ = b;
  plan.bounds_ = std::move(bounds);
  return plan;
}

BucketPlan make_bucket_plan(std::int64_t n, std::int64_t b) {
  if (n < 1 || b < 1) throw DomainError("make_bucket_plan: n and b must be >= 1");
  BucketPlan plan;
  plan.n_ = n;
  plan.b_ = b;
  plan.uniform_ = true;
  if (n <= b) {
    plan.width_ = 1;
    plan.bounds_.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 1; i <= n; ++i) plan.bounds_.push_back({i, i});
    return plan;
  }
  const std::int64_t width = (n + b - 1) / b;
  const std::int64_t m = n / width;
  plan.width_ = width;
  plan.bounds_.reserve(static_cast<std::size_t>(m));
  for (std::int64_t k = 1; k <= m; ++k) plan.bounds_.push_back({width * (k - 1) + 1, width * k});
  plan.bounds_.back().hi = n;
  return plan;
}

std::int64_t BucketPlan::bucket_of(std::int64_t idx) const {
  if (idx < 1 || idx > n_)
    throw DomainError("bucket_of: index " + std::to_string(idx) + " outside [1.." +
                      std::to_string(n_) + "]");
  if (uniform_) return std::min((idx - 1) / width_ + 1, m_buckets());
  auto it = std::upper_bound(bounds_.begin(), bounds_.end(), idx,
                             [](std::int64_t v, const BucketRange& r) { return v < r.lo; });
  return static_cast<std::int64_t>(it - bounds_.begin());
}

namespace {

void check_plan(const FeatureSequence& seq, const BucketPlan& plan) {
  if (plan.n() != seq.length())
    throw DomainError("bucket plan built for n=" + std::to_string(plan.n()) +
                      " but sequence has n=" + std::to_string(seq.length()));
}

void copy_row(const Matrix& src, std::int64_t one_based, Matrix& dst, std::size_t row) {
  auto from = src.row(static_cast<std::size_t>(one_based - 1));
  std::copy(from.begin(), from.end(), dst.row(row).begin());
}

SampledSequence gather(const FeatureSequence& seq, BucketPlan plan,
                       std::vector<std::int64_t> indices, SamplerMode mode) {
  SampledSequence out;
  out.features = Matrix(indices.size(), static_cast<std::size_t>(seq.width()));
  for (std::size_t k = 0; k < indices.size(); ++k)
    copy_row(seq.features(), indices[k], out.features, k);
  out.source_index = std::move(indices);
  out.mode = mode;
  out.plan = std::move(plan);
  return out;
}

std::vector<double> unit_row(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  double norm = 0.0;
  for (double v : row) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw DomainError("cosine distance: zero-norm feature at row " + std::to_string(r + 1));
  std::vector<double> u(row.begin(), row.end());
  for (double& v : u) v /= norm;
  return u;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::vector<double>> unit_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  rows.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(unit_row(m, r));
  return rows;
}

}  // namespace

SampledSequence sbfs_sample(const FeatureSequence& seq, const BucketPlan& plan, Rng& rng) {
  check_plan(seq, plan);
  std::vector<std::int64_t> idx;
  idx.reserve(plan.bounds().size());
  for (const auto& r : plan.bounds())
    idx.push_back(r.lo == r.hi ? r.lo : rng.uniform_int(r.lo, r.hi));
  return gather(seq, plan, std::move(idx), SamplerMode::sbfs);
}

SampledSequence pool_infer(const FeatureSequence& seq, const BucketPlan& plan, Pool pool) {
  check_plan(seq, plan);
  const auto d = static_cast<std::size_t>(seq.width());
  SampledSequence out;
  out.features = Matrix(plan.bounds().size(), d);
  out.mode = pool == Pool::max ? SamplerMode::max : SamplerMode::mean;
  out.plan = plan;
  const Matrix& g = seq.features();
  for (std::size_t k = 0; k < plan.bounds().size(); ++k) {
    const auto [lo, hi] = plan.bounds()[k];
    auto dst = out.features.row(k);
    auto first = g.row(static_cast<std::size_t>(lo - 1));
    std::copy(first.begin(), first.end(), dst.begin());
    for (std::int64_t i = lo + 1; i <= hi; ++i) {
      auto src = g.row(static_cast<std::size_t>(i - 1));
      for (std::size_t j = 0; j < d; ++j)
        dst[j] = pool == Pool::max ? std::max(dst[j], src[j]) : dst[j] + src[j];
    }
    if (pool == Pool::mean) {
      const double inv = 1.0 / static_cast<double>(hi - lo + 1);
      for (double& v : dst) v *= inv;
    }
  }
  return out;
}

std::pair<std::int64_t, std::int64_t> remap_labels(const MomentAnnotation& ann,
                                                   const BucketPlan& plan) {
  const std::int64_t s = plan.bucket_of(ann.feat_start);
  const std::int64_t e = plan.bucket_of(ann.feat_end);
  return {std::min(s, e), std::max(s, e)};
}

SampledSequence random_sample(const FeatureSequence& seq, std::int64_t b, Rng& rng) {
  if (b < 1) throw DomainError("random_sample: b must be >= 1");
  const std::int64_t n = seq.length();
  if (n <= b) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i + 1;
    return gather(seq, make_bucket_plan(n, b), std::move(idx), SamplerMode::random);
  }
  // Floyd's algorithm: b distinct draws from [1..n] with b RNG calls.
  std::vector<char> taken(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(b));
  for (std::int64_t j = n - b + 1; j <= n; ++j) {
    const std::int64_t t = rng.uniform_int(1, j);
    const std::int64_t pick = taken[static_cast<std::size_t>(t)] ? j : t;
    taken[static_cast<std::size_t>(pick)] = 1;
    idx.push_back(pick);
  }
  std::sort(idx.begin(), idx.end());
  std::vector<BucketRange> bounds;
  bounds.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::int64_t lo = k == 0 ? 1 : idx[k];
    const std::int64_t hi = k + 1 == idx.size() ? n : idx[k + 1] - 1;
    bounds.push_back({lo, hi});
  }
  return gather(seq, BucketPlan::from_bounds(n, b, std::move(bounds)), std::move(idx),
                SamplerMode::random);
}

FeatureSequence frvs_decimate(const FeatureSequence& seq, double target_fps) {
  if (!(target_fps > 0.0)) throw DomainError("frvs_decimate: target fps must be > 0");
  if (target_fps > seq.fps() * (1.0 + 1e-12))
    throw DomainError("frvs_decimate: target fps exceeds source fps");
  const auto stride = std::max<std::int64_t>(1, std::llround(seq.fps() / target_fps));
  if (stride == 1) return seq;
  const std::int64_t n = seq.length();
  const std::int64_t kept = (n + stride - 1) / stride;
  Matrix out(static_cast<std::size_t>(kept), static_cast<std::size_t>(seq.width()));
  for (std::int64_t k = 0; k < kept; ++k) copy_row(seq.features(), k * stride + 1, out, static_cast<std::size_t>(k));
  const double fps = seq.fps() / static_cast<double>(stride);
  const auto frames = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(seq.frame_count()) / static_cast<double>(stride)));
  return FeatureSequence(std::move(out), fps, frames);
}

Matrix cosine_distance_matrix(const FeatureSequence& seq) {
  const auto rows = unit_rows(seq.features());
  const std::size_t n = rows.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 1.0 - std::clamp(dot(rows[i], rows[j]), -1.0, 1.0);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

BucketPlan drfs_buckets(const FeatureSequence& seq, std::int64_t b, double th0, double step) {
  if (b < 1) throw DomainError("drfs_buckets: b must be >= 1");
  if (!(step > 0.0)) throw DomainError("drfs_buckets: step must be > 0");
  const auto rows = unit_rows(seq.features());
  const std::int64_t n = seq.length();
  constexpr double kTol = 1e-12;
  for (double th = th0; th >= -kTol; th -= step) {
    std::vector<BucketRange> bounds;
    std::int64_t head = 1;
    for (std::int64_t i = 2; i <= n; ++i) {
      const double sim = dot(rows[static_cast<std::size_t>(head - 1)], rows[static_cast<std::size_t>(i - 1)]);
      if (sim < th - kTol) {
        bounds.push_back({head, i - 1});
        head = i;
        if (static_cast<std::int64_t>(bounds.size()) >= b) break;
      }
    }
    if (static_cast<std::int64_t>(bounds.size()) >= b) continue;
    bounds.push_back({head, n});
    return BucketPlan::from_bounds(n, b, std::move(bounds));
  }
  return make_bucket_plan(n, b);
}

std::vector<std::pair<std::int64_t, std::int64_t>> dtw_path(const Matrix& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (n == 0 || m == 0) throw DomainError("dtw_path: empty cost matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, kInf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = 0.0;
      if (i > 0 || j > 0) {
        best = kInf;
        if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
        if (i > 0) best = std::min(best, at(i - 1, j));
        if (j > 0) best = std::min(best, at(i, j - 1));
      }
      at(i, j) = cost(i, j) + best;
    }
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> path;
  std::size_t i = n - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

BucketPlan dtw_buckets(const FeatureSequence& seq, std::int64_t b) {
  if (b < 1) throw DomainError("dtw_buckets: b must be >= 1");
  const BucketPlan uniform = make_bucket_plan(seq.length(), b);
  const SampledSequence reference = pool_infer(seq, uniform, Pool::max);
  const auto src = unit_rows(seq.features());
  const auto ref = unit_rows(reference.features);
  Matrix cost(src.size(), ref.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j)
      cost(i, j) = 1.0 - std::clamp(dot(src[i], ref[j]), -1.0, 1.0);

  // Path cells arrive sorted by source index, so the first hit per source row
  // is its earliest reference row.
  std::vector<std::int64_t> assigned(src.size(), -1);
  for (const auto& [i, j] : dtw_path(cost))
    if (assigned[static_cast<std::size_t>(i)] < 0) assigned[static_cast<std::size_t>(i)] = j;

  std::vector<BucketRange> bounds;
  const auto n = seq.length();
  std::int64_t lo = 1;
  for (std::int64_t i = 2; i <= n; ++i) {
    if (assigned[static_cast<std::size_t>(i - 1)] != assigned[static_cast<std::size_t>(i - 2)]) {
      bounds.push_back({lo, i - 1});
      lo = i;
    }
  }
  bounds.push_back({lo, n});
  return BucketPlan::from_bounds(n, b, std::move(bounds));
}

namespace {

SampledSequence pooled_or_stochastic(const FeatureSequence& seq, const BucketPlan& plan,
                                     SamplerMode how, Rng& rng) {
  switch (how) {
    case SamplerMode::max: return pool_infer(seq, plan, Pool::max);
    case SamplerMode::mean: return pool_infer(seq, plan, Pool::mean);
    case SamplerMode::sbfs: return sbfs_sample(seq, plan, rng);
    default:
      throw UsageError("inference mode must be max, mean or sbfs, got '" +
                       std::string(to_string(how)) + "'");
  }
}

}  // namespace

SampledSequence apply_sampler(const FeatureSequence& seq, const SamplerSettings& settings, Phase phase,
                              Rng& rng) {
  const SamplerMode bucketed = phase == Phase::train ? SamplerMode::sbfs : settings.infer_mode;
  const std::int64_t n = seq.length();
  SampledSequence out;
  switch (settings.mode) {
    case SamplerMode::sbfs:
      out = pooled_or_stochastic(seq, make_bucket_plan(n, settings.buckets), bucketed, rng);
      break;
    case SamplerMode::max:
      out = pool_infer(seq, make_bucket_plan(n, settings.buckets), Pool::max);
      break;
    case SamplerMode::mean:
      out = pool_infer(seq, make_bucket_plan(n, settings.buckets), Pool::mean);
      break;
    case SamplerMode::random:
      out = random_sample(seq, settings.buckets, rng);
      break;
    case SamplerMode::frvs: {
      const FeatureSequence low = frvs_decimate(seq, settings.frvs_target_fps);
      out = pooled_or_stochastic(low, make_bucket_plan(low.length(), settings.buckets), bucketed, rng);
      // Re-express buckets and picks in source indices; decimated row j is
      // source row (j-1)*stride+1.
      const auto stride = std::max<std::int64_t>(1, std::llround(seq.fps() / settings.frvs_target_fps));
      std::vector<BucketRange> bounds;
      for (const auto& r : out.plan.bounds()) bounds.push_back({(r.lo - 1) * stride + 1, std::min(n, r.hi * stride)});
      bounds.back().hi = n;
      out.plan = BucketPlan::from_bounds(n, settings.buckets, std::move(bounds));
      for (auto& idx : out.source_index) idx = (idx - 1) * stride + 1;
      break;
    }
    case SamplerMode::dtw:
      out = pooled_or_stochastic(seq, dtw_buckets(seq, settings.buckets), bucketed, rng);
      break;
    case SamplerMode::drfs:
      out = pooled_or_stochastic(seq, drfs_buckets(seq, settings.buckets, settings.drfs_th0, settings.drfs_step),
                                 bucketed, rng);
      break;
    case SamplerMode::passthrough:
      out = pool_infer(seq, make_bucket_plan(n, n), Pool::max);
      out.source_index.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) out.source_index[static_cast<std::size_t>(i)] = i + 1;
      break;
  }
  if (settings.mode != SamplerMode::sbfs || phase == Phase::train) out.mode = settings.mode;
  return out;
}

PreparedExample prepare_example(const FeatureSequence& seq, const MomentAnnotation& ann,
                                const SamplerSettings& settings, Phase phase, Rng& rng) {
  PreparedExample out;
  out.duration = seq.duration();
  out.sampled = apply_sampler(seq, settings, phase, rng);
  const auto [s, e] = remap_labels(ann, out.sampled.plan);
  out.start_bucket = s;
  out.end_bucket = e;
  return out;
}

}  // namespace momentloc
