// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace momentloc {

struct SyntheticSpec {
  std::int64_t num_examples = 500;
  std::int64_t n_min = 360;
  std::int64_t n_max = 440;
  std::int64_t d_v = 32;
  double fps = 25.0;
  std::int64_t frames_per_feature = 16;
  std::int64_t vocab = 8;
  std::int64_t query_len = 1;
  double signal_strength = 2.0;
  double moment_frac_min = 0.1;
  double moment_frac_max = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Example {
  std::string video_id;
  FeatureSequence features;
  MomentAnnotation annotation;
};

// Planted-signal task: background features are i.i.d. N(0,1); the first query
// token q selects a unit-norm sign pattern p(q) that is added, scaled by
// signal_strength, to every feature inside the moment. Patterns depend only
// on spec.seed, so splits drawn with different streams share them. Feature
// values are rounded to float so they survive the 32-bit file format.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const SyntheticSpec& spec);

  Example generate(Rng& rng, const std::string& video_id = "") const;
  /// num_examples examples from Rng(spec.seed) forked by `split`.
  std::vector<Example> dataset(std::uint64_t split, std::int64_t count) const;
  const Matrix& patterns() const noexcept { return patterns_; }
  const SyntheticSpec& spec() const noexcept { return spec_; }

 private:
  SyntheticSpec spec_;
  Matrix patterns_;  // vocab x d_v
};

Example gen_example(const SyntheticSpec& spec, Rng& rng);

// Feature file: "LGFE", u16 version=1, u32 n, u32 d_v, f32 fps, u32 l, then
// n*d_v little-endian f32 values, row-major.
inline constexpr std::uint16_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 2 + 4 + 4 + 4 + 4;
void write_features(const std::string& path, const FeatureSequence& seq);
FeatureSequence read_features(const std::string& path);
std::vector<std::uint8_t> encode_features(const FeatureSequence& seq);
FeatureSequence decode_features(std::vector<std::uint8_t> bytes);

struct ManifestRecord {
  std::string video_id;
  std::string feature_path;
  double duration_s = 0.0;
  std::vector<std::int32_t> query_tokens;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// JSON lines; blank lines are skipped, unknown fields reported through
/// `warnings`. Throws RecordError with the line number on a bad record.
std::vector<ManifestRecord> read_manifest(const std::string& path,
                                          std::vector<std::string>* warnings = nullptr);
void write_manifest(const std::string& path, std::span<const ManifestRecord> records);

/// Writes <dir>/features/<id>.lgfe per example and <dir>/<manifest_name>.
/// Returns the manifest path.
std::string write_dataset(const std::string& dir, const std::string& manifest_name,
                          std::span<const Example> examples);
/// Loads every record; relative feature paths resolve against the manifest's
/// directory.
std::vector<Example> load_dataset(const std::string& manifest_path);

struct PredictionRecord {
  std::string video_id;
  double pred_start_s = 0.0;
  double pred_end_s = 0.0;
  double tiou = 0.0;
};

void write_predictions(const std::string& path, std::span<const PredictionRecord> preds);
std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace momentloc
