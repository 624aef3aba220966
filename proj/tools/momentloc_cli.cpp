// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include <momentloc/momentloc.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Carries an exit code out of a subcommand.
struct Exit {
  int code;
};

void check(mloc_status s) {
  if (s == MLOC_OK) return;
  std::cerr << "error: " << mloc_last_error() << '\n';
  throw Exit{s == MLOC_ERR_USAGE ? kExitUsage : kExitRuntime};
}

void usage_error(const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  throw Exit{kExitUsage};
}

struct ConfigDeleter {
  void operator()(mloc_config* c) const { mloc_config_free(c); }
};
using ConfigPtr = std::unique_ptr<mloc_config, ConfigDeleter>;

struct FeaturesDeleter {
  void operator()(mloc_features* f) const { mloc_features_free(f); }
};
using FeaturesPtr = std::unique_ptr<mloc_features, FeaturesDeleter>;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { mloc_string_free(p); }
  std::string str() const { return p == nullptr ? std::string() : std::string(p); }
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) usage_error(std::string(flag) + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) usage_error(std::string(flag) + ": empty list");
  return out;
}

// Config file first, then --set pairs, then dedicated flags.
struct ConfigOptions {
  std::string path;
  std::vector<std::string> sets;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", path, "Run configuration file (key = value lines)");
    cmd->add_option("--set", sets, "Override one config key, as key=value (repeatable)");
  }

  ConfigPtr build() const {
    mloc_config* raw = nullptr;
    check(path.empty() ? mloc_config_new(&raw) : mloc_config_load(path.c_str(), &raw));
    ConfigPtr cfg(raw);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) usage_error("--set expects key=value, got '" + kv + "'");
      set(cfg.get(), kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }

  static void set(mloc_config* cfg, const std::string& key, const std::string& value) {
    check(mloc_config_set(cfg, key.c_str(), value.c_str()));
  }
};

template <class T>
void set_if(mloc_config* cfg, const char* key, const std::optional<T>& v) {
  if (!v) return;
  std::ostringstream os;
  os.precision(17);
  os << *v;
  ConfigOptions::set(cfg, key, os.str());
}

void print_eval(const mloc_eval_result& r) {
  for (std::size_t i = 0; i < r.n_alphas; ++i) std::printf("R@%g\t%.4f\n", r.alphas[i], r.recalls[i]);
  std::printf("mIoU\t%.4f\n", r.miou);
  std::printf("examples\t%lld\n", static_cast<long long>(r.examples));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentloc: bucket-sampled moment localization experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mloc_version()));

  // sample
  auto* sample = app.add_subcommand("sample", "Apply one sampler to a feature file");
  std::string s_features, s_mode = "sbfs", s_out, s_sidecar;
  std::int64_t s_buckets = 200;
  std::uint64_t s_seed = 0;
  sample->add_option("--features", s_features, "Input feature file")->required();
  sample->add_option("--mode", s_mode, "sbfs, max, mean, random, frvs, dtw, drfs or passthrough")
      ->capture_default_str();
  sample->add_option("--buckets", s_buckets, "Bucket budget b")->capture_default_str();
  sample->add_option("--seed", s_seed, "Random seed")->capture_default_str();
  sample->add_option("--out", s_out, "Output feature file")->required();
  sample->add_option("--sidecar", s_sidecar, "Bucket/index JSON (default: <out>.json)");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint and metric CSV");
  ConfigOptions t_cfg;
  t_cfg.add(train);
  std::string t_ckpt, t_metrics;
  std::optional<std::uint64_t> t_seed;
  std::optional<std::int64_t> t_epochs, t_buckets, t_batch;
  std::optional<double> t_lr;
  std::optional<std::string> t_sampler;
  std::string t_sweep;
  train->add_option("--out-checkpoint", t_ckpt, "Checkpoint path")->required();
  train->add_option("--metrics-out", t_metrics, "Per-epoch metric CSV path");
  train->add_option("--seed", t_seed, "Overrides 'seed'");
  train->add_option("--epochs", t_epochs, "Overrides 'epochs'");
  train->add_option("--buckets", t_buckets, "Overrides 'buckets'");
  train->add_option("--batch-size", t_batch, "Overrides 'batch_size'");
  train->add_option("--lr", t_lr, "Overrides 'lr'");
  train->add_option("--sampler", t_sampler, "Overrides 'sampler'");
  train->add_option("--sweep-buckets", t_sweep,
                    "Comma-separated bucket budgets; trains and evaluates once per value, writing "
                    "<checkpoint>.b<N> and <metrics>.b<N>");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint or a predictions file");
  ConfigOptions e_cfg;
  e_cfg.add(eval);
  std::string e_ckpt, e_manifest, e_alphas = "0.3,0.5,0.7", e_out, e_preds;
  eval->add_option("--checkpoint", e_ckpt, "Checkpoint to evaluate");
  eval->add_option("--manifest", e_manifest, "Evaluation manifest (default: synthetic eval split)");
  eval->add_option("--alphas", e_alphas, "tIoU thresholds")->capture_default_str();
  eval->add_option("--out", e_out, "Per-example predictions JSONL");
  eval->add_option("--predictions", e_preds, "Score this predictions JSONL instead of a checkpoint");

  // bench-mem
  auto* bench = app.add_subcommand("bench-mem", "Peak activation memory against video duration");
  ConfigOptions b_cfg;
  b_cfg.add(bench);
  std::string b_durations = "30,60,120,240,480", b_modes = "sbfs,max,mean,none", b_out;
  std::int64_t b_buckets = 200;
  bench->add_option("--durations", b_durations, "Video durations in seconds")->capture_default_str();
  bench->add_option("--modes", b_modes, "Sampler modes, plus 'none' for no sampling")->capture_default_str();
  bench->add_option("--buckets", b_buckets, "Bucket budget b")->capture_default_str();
  bench->add_option("--out", b_out, "CSV output path")->required();

  // compare-samplers
  auto* compare = app.add_subcommand("compare-samplers", "Train one model per (mode, seed) and tabulate");
  ConfigOptions c_cfg;
  c_cfg.add(compare);
  std::string c_modes, c_seeds = "0,1,2", c_out;
  std::optional<std::int64_t> c_threads;
  compare->add_option("--modes", c_modes, "Comma-separated sampler modes")->required();
  compare->add_option("--seeds", c_seeds, "Comma-separated seeds")->capture_default_str();
  compare->add_option("--threads", c_threads, "Worker threads (overrides 'threads')");
  compare->add_option("--out", c_out, "Table output path (CSV)");

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset to disk");
  ConfigOptions g_cfg;
  g_cfg.add(generate);
  std::string g_dir, g_split = "both";
  generate->add_option("--out-dir", g_dir, "Output directory")->required();
  generate->add_option("--split", g_split, "train, eval or both")
      ->check(CLI::IsMember({"train", "eval", "both"}))
      ->capture_default_str();

  // config
  auto* config = app.add_subcommand("config", "Print the effective configuration");
  ConfigOptions k_cfg;
  k_cfg.add(config);
  std::string k_get;
  config->add_option("--get", k_get, "Print a single key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sample) {
      mloc_features* raw = nullptr;
      check(mloc_features_read(s_features.c_str(), &raw));
      FeaturesPtr in(raw);
      mloc_features* out_raw = nullptr;
      OwnedString sidecar;
      check(mloc_sample(in.get(), s_mode.c_str(), s_buckets, s_seed, &out_raw, &sidecar.p));
      FeaturesPtr out(out_raw);
      check(mloc_features_write(out.get(), s_out.c_str()));
      const std::string side_path = s_sidecar.empty() ? s_out + ".json" : s_sidecar;
      FILE* f = std::fopen(side_path.c_str(), "w");
      if (f == nullptr) {
        std::cerr << "error: cannot open '" << side_path << "' for writing\n";
        return kExitRuntime;
      }
      const std::string text = sidecar.str();
      const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
      if (std::fclose(f) != 0 || !ok) {
        std::cerr << "error: write failed for '" << side_path << "'\n";
        return kExitRuntime;
      }
      std::printf("%lld -> %lld rows (%s)\n", static_cast<long long>(mloc_features_length(in.get())),
                  static_cast<long long>(mloc_features_length(out.get())), s_mode.c_str());
    } else if (*train) {
      ConfigPtr cfg = t_cfg.build();
      set_if(cfg.get(), "seed", t_seed);
      set_if(cfg.get(), "epochs", t_epochs);
      set_if(cfg.get(), "buckets", t_buckets);
      set_if(cfg.get(), "batch_size", t_batch);
      set_if(cfg.get(), "lr", t_lr);
      set_if(cfg.get(), "sampler", t_sampler);
      auto progress = [](void*, int64_t epoch, double kl, double att, double se, double total, double miou) {
        std::fprintf(stderr, "epoch %lld  kl %.4f  att %.4f  se %.4f  total %.4f  miou %.4f\n",
                     static_cast<long long>(epoch), kl, att, se, total, miou);
      };
      const char* metrics = t_metrics.empty() ? nullptr : t_metrics.c_str();
      if (t_sweep.empty()) {
        check(mloc_train(cfg.get(), t_ckpt.c_str(), metrics, progress, nullptr));
      } else {
        std::printf("buckets\tR@0.3\tR@0.5\tR@0.7\tmIoU\n");
        for (std::int64_t b : parse_list<std::int64_t>(t_sweep, "--sweep-buckets")) {
          ConfigOptions::set(cfg.get(), "buckets", std::to_string(b));
          const std::string suffix = ".b" + std::to_string(b);
          const std::string ckpt = t_ckpt + suffix;
          const std::string m = t_metrics.empty() ? std::string() : t_metrics + suffix;
          check(mloc_train(cfg.get(), ckpt.c_str(), m.empty() ? nullptr : m.c_str(), progress, nullptr));
          mloc_eval_result r{};
          check(mloc_eval(ckpt.c_str(), cfg.get(), nullptr, nullptr, 0, nullptr, &r));
          std::printf("%lld\t%.4f\t%.4f\t%.4f\t%.4f\n", static_cast<long long>(b), r.recalls[0], r.recalls[1],
                      r.recalls[2], r.miou);
        }
      }
    } else if (*eval) {
      const auto alphas = parse_list<double>(e_alphas, "--alphas");
      mloc_eval_result r{};
      if (!e_preds.empty()) {
        if (e_manifest.empty()) usage_error("--predictions needs --manifest");
        check(mloc_eval_predictions(e_preds.c_str(), e_manifest.c_str(), alphas.data(), alphas.size(), &r));
      } else {
        if (e_ckpt.empty()) usage_error("eval needs --checkpoint or --predictions");
        ConfigPtr cfg;
        if (!e_cfg.path.empty() || !e_cfg.sets.empty()) cfg = e_cfg.build();
        else if (e_manifest.empty()) cfg = e_cfg.build();
        check(mloc_eval(e_ckpt.c_str(), cfg.get(), e_manifest.empty() ? nullptr : e_manifest.c_str(),
                        alphas.data(), alphas.size(), e_out.empty() ? nullptr : e_out.c_str(), &r));
      }
      print_eval(r);
    } else if (*bench) {
      ConfigPtr cfg = b_cfg.build();
      ConfigOptions::set(cfg.get(), "buckets", std::to_string(b_buckets));
      const auto durations = parse_list<double>(b_durations, "--durations");
      check(mloc_bench_mem(cfg.get(), durations.data(), durations.size(), b_modes.c_str(), b_out.c_str()));
      std::printf("wrote %s\n", b_out.c_str());
    } else if (*compare) {
      ConfigPtr cfg = c_cfg.build();
      set_if(cfg.get(), "threads", c_threads);
      const auto seeds = parse_list<std::uint64_t>(c_seeds, "--seeds");
      OwnedString table;
      check(mloc_compare_samplers(cfg.get(), c_modes.c_str(), seeds.data(), seeds.size(),
                                  c_out.empty() ? nullptr : c_out.c_str(), &table.p));
      std::fputs(table.str().c_str(), stdout);
    } else if (*generate) {
      ConfigPtr cfg = g_cfg.build();
      auto count = [&](const char* key) {
        OwnedString v;
        check(mloc_config_get(cfg.get(), key, &v.p));
        return std::stoll(v.str());
      };
      if (g_split != "eval") {
        OwnedString path;
        check(mloc_generate(cfg.get(), g_dir.c_str(), "train.jsonl", 1, count("train_examples"), &path.p));
        std::printf("wrote %s\n", path.p);
      }
      if (g_split != "train") {
        OwnedString path;
        check(mloc_generate(cfg.get(), g_dir.c_str(), "eval.jsonl", 2, count("eval_examples"), &path.p));
        std::printf("wrote %s\n", path.p);
      }
    } else if (*config) {
      ConfigPtr cfg = k_cfg.build();
      OwnedString text;
      if (k_get.empty()) check(mloc_config_dump(cfg.get(), &text.p));
      else check(mloc_config_get(cfg.get(), k_get.c_str(), &text.p));
      std::fputs(text.str().c_str(), stdout);
      if (!k_get.empty()) std::fputc('\n', stdout);
    }
  } catch (const Exit& e) {
    return e.code;
  }
  return 0;
}
