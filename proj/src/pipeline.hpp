// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace momentloc {

// Everything a run needs. Serialized as a flat `key = value` file; see
// run_config_keys() for the namespace and defaults.
struct RunConfig {
  ModelConfig model;
  SamplerSettings sampler;
  std::uint64_t seed = 0;
  std::int64_t epochs = 30;
  std::int64_t batch_size = 8;
  double lr = 3e-3;
  LossOptions loss;

  // Synthetic data, used when no manifest is given.
  std::uint64_t data_seed = 0;
  std::int64_t train_examples = 500;
  std::int64_t eval_examples = 100;
  std::int64_t n_min = 360;
  std::int64_t n_max = 440;
  std::int64_t query_len = 1;
  double fps = 25.0;
  std::int64_t frames_per_feature = 16;
  double signal_strength = 2.0;
  double moment_frac_min = 0.1;
  double moment_frac_max = 0.3;

  std::int64_t bench_text_len = 8;     // query length for bench-mem
  std::int64_t metrics_subset = 100;  // training examples scored per epoch
  std::int64_t threads = 1;
  std::string train_manifest;
  std::string eval_manifest;

  /// Cross-field checks; throws UsageError.
  void validate() const;
  SyntheticSpec synthetic_spec() const;
};

struct ConfigKey {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& run_config_keys();
/// Throws UsageError for unknown keys or unparseable values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
/// `#` starts a comment; blank lines are ignored.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

struct Datasets {
  std::vector<Example> train;
  std::vector<Example> eval;
};
/// Manifests when configured, otherwise synthetic splits from data_seed.
Datasets make_datasets(const RunConfig& cfg, bool need_train = true, bool need_eval = true);

struct EpochMetrics {
  std::int64_t epoch = 0;
  LossBreakdown loss;
  double miou = 0.0;
};

inline constexpr const char* kMetricsCsvHeader = "epoch,loss_kl,loss_att,loss_se,loss_total,miou";
void write_metrics_csv(std::ostream& os, std::span<const EpochMetrics> rows);

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;
TrainResult train_model(const RunConfig& cfg, std::span<const Example> train,
                        const EpochCallback& on_epoch = {});

inline constexpr double kDefaultAlphas[] = {0.3, 0.5, 0.7};

struct EvalResult {
  std::vector<double> alphas;
  std::vector<double> recalls;
  double miou = 0.0;
  std::vector<PredictionRecord> predictions;
};

EvalResult evaluate(Model& model, const RunConfig& cfg, std::span<const Example> examples,
                    std::span<const double> alphas = kDefaultAlphas);
/// Scores stored predictions against the records of a manifest, matched by
/// position; video ids must agree.
EvalResult evaluate_predictions(std::span<const PredictionRecord> preds,
                                std::span<const ManifestRecord> truth,
                                std::span<const double> alphas = kDefaultAlphas);

struct CompareRow {
  std::string mode;
  std::vector<double> recalls;  // seed means
  double miou = 0.0;            // seed mean
  std::vector<double> seed_miou;
};

/// One model per (mode, seed) cell, cells spread over cfg.threads workers.
/// Rows are sorted by mIoU, descending.
std::vector<CompareRow> compare_samplers(const RunConfig& cfg, std::span<const std::string> modes,
                                         std::span<const std::uint64_t> seeds,
                                         std::span<const double> alphas = kDefaultAlphas);
void write_compare_table(std::ostream& os, std::span<const CompareRow> rows,
                         std::span<const double> alphas);

}  // namespace momentloc
