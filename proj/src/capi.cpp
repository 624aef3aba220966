// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include <momentloc/momentloc.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "data.hpp"
#include "memory.hpp"
#include "pipeline.hpp"

struct mloc_features {
  momentloc::FeatureSequence seq;
};

struct mloc_config {
  momentloc::RunConfig cfg;
};

namespace {

using namespace momentloc;

thread_local std::string g_last_error;

mloc_status fail(mloc_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
mloc_status guard(F&& f) noexcept {
  try {
    g_last_error.clear();
    f();
    return MLOC_OK;
  } catch (const DomainError& e) {
    return fail(MLOC_ERR_DOMAIN, e.what());
  } catch (const NumericError& e) {
    return fail(MLOC_ERR_NUMERIC, e.what());
  } catch (const FormatError& e) {
    return fail(MLOC_ERR_FORMAT, e.what());
  } catch (const RecordError& e) {
    return fail(MLOC_ERR_FORMAT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MLOC_ERR_FORMAT, e.what());
  } catch (const IoError& e) {
    return fail(MLOC_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MLOC_ERR_IO, e.what());
  } catch (const MismatchError& e) {
    return fail(MLOC_ERR_MISMATCH, e.what());
  } catch (const UsageError& e) {
    return fail(MLOC_ERR_USAGE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MLOC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MLOC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MLOC_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw UsageError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> split_list(const char* text) {
  std::vector<std::string> out;
  std::stringstream ss(text == nullptr ? "" : text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::vector<double> alpha_list(const double* alphas, std::size_t n) {
  if (alphas == nullptr || n == 0) return {std::begin(kDefaultAlphas), std::end(kDefaultAlphas)};
  if (n > 8) throw UsageError("at most 8 alphas are supported");
  for (std::size_t i = 0; i < n; ++i)
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) throw UsageError("alphas must lie in (0, 1)");
  return {alphas, alphas + n};
}

void fill_result(const EvalResult& r, mloc_eval_result* out) {
  if (out == nullptr) return;
  *out = mloc_eval_result{};
  out->n_alphas = r.alphas.size();
  for (std::size_t i = 0; i < r.alphas.size(); ++i) {
    out->alphas[i] = r.alphas[i];
    out->recalls[i] = i < r.recalls.size() ? r.recalls[i] : 0.0;
  }
  out->miou = r.miou;
  out->examples = static_cast<std::int64_t>(r.predictions.size());
}

std::ofstream open_out(const char* path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(std::string("cannot open '") + path + "' for writing");
  return f;
}

}  // namespace

extern "C" {

const char* mloc_version(void) { return "1.0.0"; }
const char* mloc_last_error(void) { return g_last_error.c_str(); }
void mloc_string_free(char* s) { std::free(s); }

mloc_status mloc_features_read(const char* path, mloc_features** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new mloc_features{read_features(path)};
  });
}

mloc_status mloc_features_write(const mloc_features* f, const char* path) {
  return guard([&] {
    require(f, "features");
    require(path, "path");
    write_features(path, f->seq);
  });
}

mloc_status mloc_features_create(const double* data, int64_t n, int64_t d, double fps, int64_t frame_count,
                                 mloc_features** out) {
  return guard([&] {
    require(data, "data");
    require(out, "out");
    if (n < 1 || d < 1) throw DomainError("n and d must be >= 1");
    Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    std::copy(data, data + n * d, m.data());
    *out = new mloc_features{FeatureSequence(std::move(m), fps, frame_count)};
  });
}

int64_t mloc_features_length(const mloc_features* f) { return f == nullptr ? 0 : f->seq.length(); }
int64_t mloc_features_width(const mloc_features* f) { return f == nullptr ? 0 : f->seq.width(); }
double mloc_features_fps(const mloc_features* f) { return f == nullptr ? 0.0 : f->seq.fps(); }
int64_t mloc_features_frame_count(const mloc_features* f) { return f == nullptr ? 0 : f->seq.frame_count(); }

mloc_status mloc_features_copy_data(const mloc_features* f, double* out, size_t capacity) {
  return guard([&] {
    require(f, "features");
    require(out, "out");
    const auto vals = f->seq.features().values();
    if (capacity < vals.size()) throw DomainError("buffer holds " + std::to_string(capacity) +
                                                  " values, need " + std::to_string(vals.size()));
    std::copy(vals.begin(), vals.end(), out);
  });
}

void mloc_features_free(mloc_features* f) { delete f; }

mloc_status mloc_sample(const mloc_features* in, const char* mode, int64_t buckets, uint64_t seed,
                        mloc_features** out, char** sidecar_json) {
  return guard([&] {
    require(in, "features");
    require(mode, "mode");
    require(out, "out");
    SamplerSettings settings;
    try {
      settings.mode = parse_sampler_mode(mode);
    } catch (const DomainError&) {
      throw UsageError(std::string("unknown sampler mode '") + mode + "'");
    }
    if (buckets < 1) throw UsageError("buckets must be >= 1");
    settings.buckets = buckets;
    Rng rng(seed);
    const SampledSequence s = apply_sampler(in->seq, settings, Phase::train, rng);
    auto result = std::make_unique<mloc_features>(
        mloc_features{FeatureSequence(s.features, in->seq.fps(), in->seq.frame_count())});
    if (sidecar_json != nullptr) {
      nlohmann::json side;
      side["mode"] = std::string(to_string(s.mode));
      side["source_length"] = in->seq.length();
      side["budget"] = buckets;
      side["m_buckets"] = s.plan.m_buckets();
      nlohmann::json list = nlohmann::json::array();
      for (std::int64_t k = 1; k <= s.plan.m_buckets(); ++k) {
        const auto& r = s.plan.bucket(k);
        nlohmann::json item = {{"bucket", k}, {"lo", r.lo}, {"hi", r.hi}};
        item["source_index"] = s.source_index.empty() ? nlohmann::json(nullptr)
                                                      : nlohmann::json(s.source_index[static_cast<std::size_t>(k - 1)]);
        list.push_back(std::move(item));
      }
      side["buckets"] = std::move(list);
      *sidecar_json = dup_string(side.dump(2) + "\n");
    }
    *out = result.release();
  });
}

mloc_status mloc_config_new(mloc_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new mloc_config{};
  });
}

mloc_status mloc_config_load(const char* path, mloc_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new mloc_config{load_run_config(path)};
  });
}

mloc_status mloc_config_set(mloc_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    set_config_value(cfg->cfg, key, value);
  });
}

mloc_status mloc_config_get(const mloc_config* cfg, const char* key, char** value) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    *value = dup_string(get_config_value(cfg->cfg, key));
  });
}

mloc_status mloc_config_dump(const mloc_config* cfg, char** text) {
  return guard([&] {
    require(cfg, "config");
    require(text, "text");
    *text = dup_string(dump_run_config(cfg->cfg));
  });
}

mloc_status mloc_config_validate(const mloc_config* cfg) {
  return guard([&] {
    require(cfg, "config");
    cfg->cfg.validate();
  });
}

void mloc_config_free(mloc_config* cfg) { delete cfg; }

mloc_status mloc_train(const mloc_config* cfg, const char* checkpoint_path, const char* metrics_path,
                       mloc_epoch_fn on_epoch, void* user) {
  return guard([&] {
    require(cfg, "config");
    const RunConfig& rc = cfg->cfg;
    rc.validate();
    std::ofstream metrics;
    if (metrics_path != nullptr) {
      metrics = open_out(metrics_path);
      metrics << kMetricsCsvHeader << '\n' << std::flush;
    }
    const Datasets data = make_datasets(rc, true, false);
    TrainResult res = train_model(rc, data.train, [&](const EpochMetrics& m) {
      if (metrics.is_open()) {
        std::ostringstream row;
        write_metrics_csv(row, std::span<const EpochMetrics>(&m, 1));
        const std::string text = row.str();
        metrics << text.substr(text.find('\n') + 1) << std::flush;
      }
      if (on_epoch != nullptr) on_epoch(user, m.epoch, m.loss.kl, m.loss.att, m.loss.se, m.loss.total, m.miou);
    });
    if (metrics.is_open() && !metrics) throw IoError(std::string("write failed for '") + metrics_path + "'");
    if (checkpoint_path != nullptr) save_checkpoint(checkpoint_path, res.model);
  });
}

mloc_status mloc_generate(const mloc_config* cfg, const char* dir, const char* manifest_name, uint64_t split,
                          int64_t count, char** manifest_path) {
  return guard([&] {
    require(cfg, "config");
    require(dir, "dir");
    require(manifest_name, "manifest_name");
    if (count < 0) throw UsageError("count must be >= 0");
    cfg->cfg.validate();
    const SyntheticGenerator gen(cfg->cfg.synthetic_spec());
    const auto examples = gen.dataset(split, count);
    const std::string path = write_dataset(dir, manifest_name, examples);
    if (manifest_path != nullptr) *manifest_path = dup_string(path);
  });
}

mloc_status mloc_eval(const char* checkpoint_path, const mloc_config* cfg, const char* manifest,
                      const double* alphas, size_t n_alphas, const char* predictions_path,
                      mloc_eval_result* result) {
  return guard([&] {
    require(checkpoint_path, "checkpoint_path");
    const auto a = alpha_list(alphas, n_alphas);
    Model model = load_checkpoint(checkpoint_path);
    RunConfig rc = cfg != nullptr ? cfg->cfg : RunConfig{};
    if (cfg != nullptr) require_same_config(rc.model, model.config());
    rc.model = model.config();
    rc.sampler.buckets = rc.model.buckets;
    if (manifest != nullptr) rc.eval_manifest = manifest;
    else if (cfg == nullptr) throw UsageError("eval needs a manifest or a config");
    const Datasets data = make_datasets(rc, false, true);
    const EvalResult r = evaluate(model, rc, data.eval, a);
    if (predictions_path != nullptr) write_predictions(predictions_path, r.predictions);
    fill_result(r, result);
  });
}

mloc_status mloc_eval_predictions(const char* predictions_path, const char* manifest, const double* alphas,
                                  size_t n_alphas, mloc_eval_result* result) {
  return guard([&] {
    require(predictions_path, "predictions_path");
    require(manifest, "manifest");
    const auto a = alpha_list(alphas, n_alphas);
    const auto preds = read_predictions(predictions_path);
    const auto truth = read_manifest(manifest);
    fill_result(evaluate_predictions(preds, truth, a), result);
  });
}

mloc_status mloc_bench_mem(const mloc_config* cfg, const double* durations, size_t n_durations, const char* modes,
                           const char* csv_path) {
  return guard([&] {
    require(cfg, "config");
    require(durations, "durations");
    require(csv_path, "csv_path");
    if (n_durations == 0) throw UsageError("at least one duration is required");
    const RunConfig& rc = cfg->cfg;
    rc.validate();
    std::vector<std::string> mode_list = split_list(modes);
    if (mode_list.empty()) throw UsageError("at least one mode is required");
    for (const auto& m : mode_list) {
      if (m == "none") continue;
      try {
        parse_sampler_mode(m);
      } catch (const DomainError&) {
        throw UsageError("unknown sampler mode '" + m + "'");
      }
    }
    BenchOptions opts;
    opts.fps = rc.fps;
    opts.frames_per_feature = rc.frames_per_feature;
    opts.text_len = rc.bench_text_len;
    opts.seed = rc.seed;
    const auto reports = bench_curve(std::span<const double>(durations, n_durations), mode_list, rc.model, opts);
    std::ofstream f = open_out(csv_path);
    write_bench_csv(f, reports);
    if (!f) throw IoError(std::string("write failed for '") + csv_path + "'");
  });
}

mloc_status mloc_compare_samplers(const mloc_config* cfg, const char* modes, const uint64_t* seeds, size_t n_seeds,
                                  const char* table_path, char** table) {
  return guard([&] {
    require(cfg, "config");
    require(seeds, "seeds");
    const auto mode_list = split_list(modes);
    const auto alphas = std::vector<double>(std::begin(kDefaultAlphas), std::end(kDefaultAlphas));
    const auto rows = compare_samplers(cfg->cfg, mode_list, std::span<const std::uint64_t>(seeds, n_seeds), alphas);
    std::ostringstream os;
    write_compare_table(os, rows, alphas);
    if (table_path != nullptr) {
      std::ofstream f = open_out(table_path);
      f << os.str();
      if (!f) throw IoError(std::string("write failed for '") + table_path + "'");
    }
    if (table != nullptr) *table = dup_string(os.str());
  });
}

}  // extern "C"
