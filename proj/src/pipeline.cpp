// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace momentloc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw UsageError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw UsageError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size() && std::isfinite(out)) return out;
  } catch (const std::exception&) {
  }
  throw UsageError("'" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("'" + key + "' expects true or false, got '" + v + "'");
}

SamplerMode parse_mode(const std::string& key, const std::string& v) {
  try {
    return parse_sampler_mode(v);
  } catch (const DomainError&) {
    throw UsageError("'" + key + "': unknown sampler mode '" + v + "'");
  }
}

std::string fmt_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
ConfigKey int_key(const char* name, const char* help, T RunConfig::*field) {
  return {name, help, [field, name](RunConfig& c, const std::string& v) {
            if constexpr (std::is_unsigned_v<T>) c.*field = parse_uint(name, v);
            else c.*field = parse_int(name, v);
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey real_key(const char* name, const char* help, double RunConfig::*field) {
  return {name, help, [field, name](RunConfig& c, const std::string& v) { c.*field = parse_real(name, v); },
          [field](const RunConfig& c) { return fmt_real(c.*field); }};
}

ConfigKey model_key(const char* name, const char* help, std::int64_t ModelConfig::*field) {
  return {name, help, [field, name](RunConfig& c, const std::string& v) { c.model.*field = parse_int(name, v); },
          [field](const RunConfig& c) { return std::to_string(c.model.*field); }};
}

ConfigKey loss_flag(const char* name, const char* help, bool LossOptions::*field) {
  return {name, help, [field, name](RunConfig& c, const std::string& v) { c.loss.*field = parse_bool(name, v); },
          [field](const RunConfig& c) { return std::string(c.loss.*field ? "true" : "false"); }};
}

ConfigKey path_key(const char* name, const char* help, std::string RunConfig::*field) {
  return {name, help, [field](RunConfig& c, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back(model_key("d_model", "hidden width", &ModelConfig::d_model));
  k.push_back(model_key("loc_layers", "localization encoder blocks", &ModelConfig::loc_layers));
  k.push_back(model_key("loc_heads", "localization attention heads", &ModelConfig::loc_heads));
  k.push_back(model_key("text_layers", "query encoder blocks", &ModelConfig::text_layers));
  k.push_back(model_key("text_heads", "query encoder attention heads", &ModelConfig::text_heads));
  k.push_back({"buckets", "bucket budget b (also the model's output length)",
               [](RunConfig& c, const std::string& v) {
                 c.model.buckets = parse_int("buckets", v);
                 c.sampler.buckets = c.model.buckets;
               },
               [](const RunConfig& c) { return std::to_string(c.model.buckets); }});
  k.push_back(model_key("vocab", "query token vocabulary size", &ModelConfig::vocab));
  k.push_back(model_key("d_video", "video feature width", &ModelConfig::d_video));
  k.push_back(model_key("max_text_len", "longest accepted query", &ModelConfig::max_text_len));
  k.push_back(model_key("max_video_len", "video positional table size", &ModelConfig::max_video_len));
  k.push_back(model_key("ffn_mult", "feed-forward width multiplier", &ModelConfig::ffn_mult));
  k.push_back({"sampler", "training sampler: sbfs max mean random frvs dtw drfs passthrough",
               [](RunConfig& c, const std::string& v) { c.sampler.mode = parse_mode("sampler", v); },
               [](const RunConfig& c) { return std::string(to_string(c.sampler.mode)); }});
  k.push_back({"infer_mode", "inference reduction for bucketed samplers: max mean sbfs",
               [](RunConfig& c, const std::string& v) {
                 const SamplerMode m = parse_mode("infer_mode", v);
                 if (m != SamplerMode::max && m != SamplerMode::mean && m != SamplerMode::sbfs)
                   throw UsageError("'infer_mode' must be max, mean or sbfs");
                 c.sampler.infer_mode = m;
               },
               [](const RunConfig& c) { return std::string(to_string(c.sampler.infer_mode)); }});
  k.push_back({"frvs_target_fps", "frame rate kept by frvs decimation",
               [](RunConfig& c, const std::string& v) { c.sampler.frvs_target_fps = parse_real("frvs_target_fps", v); },
               [](const RunConfig& c) { return fmt_real(c.sampler.frvs_target_fps); }});
  k.push_back({"drfs_th0", "initial drfs similarity threshold",
               [](RunConfig& c, const std::string& v) { c.sampler.drfs_th0 = parse_real("drfs_th0", v); },
               [](const RunConfig& c) { return fmt_real(c.sampler.drfs_th0); }});
  k.push_back({"drfs_step", "drfs threshold decrement",
               [](RunConfig& c, const std::string& v) { c.sampler.drfs_step = parse_real("drfs_step", v); },
               [](const RunConfig& c) { return fmt_real(c.sampler.drfs_step); }});
  k.push_back(int_key("seed", "model init and sampling seed", &RunConfig::seed));
  k.push_back(int_key("epochs", "training epochs", &RunConfig::epochs));
  k.push_back(int_key("batch_size", "examples per optimizer step", &RunConfig::batch_size));
  k.push_back(real_key("lr", "Adam step size", &RunConfig::lr));
  k.push_back(loss_flag("enable_att", "attention guidance loss", &LossOptions::enable_att));
  k.push_back(loss_flag("enable_se", "temporal order loss", &LossOptions::enable_se));
  k.push_back(loss_flag("literal_order_min", "use min(0, .) instead of the hinge", &LossOptions::literal_order_min));
  k.push_back(loss_flag("supervise_all_heads", "also guide the query encoder heads",
                        &LossOptions::supervise_all_heads));
  k.push_back({"soft_label_width", "triangular soft-label half width (0 = one-hot)",
               [](RunConfig& c, const std::string& v) { c.loss.soft_label_width = parse_int("soft_label_width", v); },
               [](const RunConfig& c) { return std::to_string(c.loss.soft_label_width); }});
  k.push_back(int_key("data_seed", "synthetic dataset seed", &RunConfig::data_seed));
  k.push_back(int_key("train_examples", "synthetic training examples", &RunConfig::train_examples));
  k.push_back(int_key("eval_examples", "synthetic evaluation examples", &RunConfig::eval_examples));
  k.push_back(int_key("n_min", "shortest synthetic video, in features", &RunConfig::n_min));
  k.push_back(int_key("n_max", "longest synthetic video, in features", &RunConfig::n_max));
  k.push_back(int_key("query_len", "synthetic query length", &RunConfig::query_len));
  k.push_back(real_key("fps", "synthetic frame rate", &RunConfig::fps));
  k.push_back(int_key("frames_per_feature", "frames per synthetic feature", &RunConfig::frames_per_feature));
  k.push_back(real_key("signal_strength", "planted pattern scale", &RunConfig::signal_strength));
  k.push_back(real_key("moment_frac_min", "shortest moment, fraction of duration", &RunConfig::moment_frac_min));
  k.push_back(real_key("moment_frac_max", "longest moment, fraction of duration", &RunConfig::moment_frac_max));
  k.push_back(int_key("bench_text_len", "query length used by bench-mem", &RunConfig::bench_text_len));
  k.push_back(int_key("metrics_subset", "training examples scored for the per-epoch mIoU", &RunConfig::metrics_subset));
  k.push_back(int_key("threads", "worker threads for compare-samplers", &RunConfig::threads));
  k.push_back(path_key("train_manifest", "training manifest (empty = synthetic)", &RunConfig::train_manifest));
  k.push_back(path_key("eval_manifest", "evaluation manifest (empty = synthetic)", &RunConfig::eval_manifest));
  return k;
}

const ConfigKey& find_key(const std::string& key) {
  for (const auto& k : run_config_keys())
    if (key == k.name) return k;
  throw UsageError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (sampler.buckets != model.buckets) throw UsageError("sampler and model bucket budgets differ");
  if (epochs < 0) throw UsageError("'epochs' must be >= 0");
  if (batch_size < 1) throw UsageError("'batch_size' must be >= 1");
  if (!(lr > 0.0)) throw UsageError("'lr' must be > 0");
  if (loss.soft_label_width < 0) throw UsageError("'soft_label_width' must be >= 0");
  if (bench_text_len < 1 || bench_text_len > model.max_text_len)
    throw UsageError("'bench_text_len' must lie in [1, max_text_len]");
  if (metrics_subset < 0) throw UsageError("'metrics_subset' must be >= 0");
  if (threads < 1) throw UsageError("'threads' must be >= 1");
  if (query_len > model.max_text_len) throw UsageError("'query_len' exceeds 'max_text_len'");
  if (!(sampler.frvs_target_fps > 0.0)) throw UsageError("'frvs_target_fps' must be > 0");
  if (!(sampler.drfs_step > 0.0)) throw UsageError("'drfs_step' must be > 0");
  try {
    synthetic_spec().validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.num_examples = train_examples;
  s.n_min = n_min;
  s.n_max = n_max;
  s.d_v = model.d_video;
  s.fps = fps;
  s.frames_per_feature = frames_per_feature;
  s.vocab = model.vocab;
  s.query_len = query_len;
  s.signal_strength = signal_strength;
  s.moment_frac_min = moment_frac_min;
  s.moment_frac_max = moment_frac_max;
  s.seed = data_seed;
  return s;
}

const std::vector<ConfigKey>& run_config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line) + ": expected 'key = value'");
    try {
      set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& k : run_config_keys()) os << "# " << k.help << '\n' << k.name << " = " << k.get(cfg) << '\n';
  return os.str();
}

Datasets make_datasets(const RunConfig& cfg, bool need_train, bool need_eval) {
  Datasets d;
  const SyntheticGenerator gen(cfg.synthetic_spec());
  if (need_train)
    d.train = cfg.train_manifest.empty() ? gen.dataset(1, cfg.train_examples) : load_dataset(cfg.train_manifest);
  if (need_eval)
    d.eval = cfg.eval_manifest.empty() ? gen.dataset(2, cfg.eval_examples) : load_dataset(cfg.eval_manifest);
  return d;
}

void write_metrics_csv(std::ostream& os, std::span<const EpochMetrics> rows) {
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.epoch << ',' << fmt_real(r.loss.kl) << ',' << fmt_real(r.loss.att) << ','
       << fmt_real(r.loss.se) << ',' << fmt_real(r.loss.total) << ',' << fmt_real(r.miou) << '\n';
  }
}

TrainResult train_model(const RunConfig& cfg, std::span<const Example> train, const EpochCallback& on_epoch) {
  cfg.validate();
  Rng root(cfg.seed);
  TrainResult res{Model(cfg.model, root.next_u64()), {}};
  Rng rng = root.fork(1);
  Adam opt(res.model.parameters(), cfg.lr);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t subset = std::min<std::size_t>(train.size(), static_cast<std::size_t>(cfg.metrics_subset));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    LossBreakdown sum;
    std::size_t steps = 0;
    std::vector<PreparedExample> prepared;
    std::vector<BatchItem> items;
    for (std::size_t at = 0; at < order.size(); at += batch) {
      const std::size_t end = std::min(order.size(), at + batch);
      prepared.clear();
      items.clear();
      for (std::size_t j = at; j < end; ++j) {
        const Example& ex = train[order[j]];
        prepared.push_back(prepare_example(ex.features, ex.annotation, cfg.sampler, Phase::train, rng));
      }
      for (std::size_t j = at; j < end; ++j)
        items.push_back({train[order[j]].annotation.query_tokens, &prepared[j - at]});
      sum += train_step(res.model, opt, items, cfg.loss);
      ++steps;
    }
    EpochMetrics row;
    row.epoch = epoch;
    if (steps > 0) {
      const double k = 1.0 / static_cast<double>(steps);
      row.loss = {sum.kl * k, sum.att * k, sum.se * k, sum.total * k};
    }
    if (subset > 0) row.miou = evaluate(res.model, cfg, train.first(subset), {}).miou;
    res.metrics.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return res;
}

namespace {

Span predicted_span(Model& model, const Example& ex, const SamplerSettings& sampler, Rng& rng) {
  const PreparedExample prep = prepare_example(ex.features, ex.annotation, sampler, Phase::infer, rng);
  diffmath::Tape tape;
  const LocalizationOutput out = model.forward(tape, ex.annotation.query_tokens, prep.sampled.features);
  return predict_span(out, prep.sampled.plan, prep.duration);
}

EvalResult summarize(std::vector<SpanPair> pairs, std::vector<PredictionRecord> preds,
                     std::span<const double> alphas) {
  EvalResult r;
  r.alphas.assign(alphas.begin(), alphas.end());
  r.predictions = std::move(preds);
  if (pairs.empty()) return r;
  for (double a : alphas) r.recalls.push_back(recall_at(a, pairs));
  r.miou = mean_iou(pairs);
  return r;
}

}  // namespace

EvalResult evaluate(Model& model, const RunConfig& cfg, std::span<const Example> examples,
                    std::span<const double> alphas) {
  Rng rng = Rng(cfg.seed).fork(2);
  std::vector<SpanPair> pairs;
  std::vector<PredictionRecord> preds;
  for (const auto& ex : examples) {
    const Span pred = predicted_span(model, ex, cfg.sampler, rng);
    const Span gt{ex.annotation.start_s, ex.annotation.end_s};
    pairs.push_back({pred, gt});
    preds.push_back({ex.video_id, pred.start, pred.end, tiou(pred, gt)});
  }
  return summarize(std::move(pairs), std::move(preds), alphas);
}

EvalResult evaluate_predictions(std::span<const PredictionRecord> preds, std::span<const ManifestRecord> truth,
                                std::span<const double> alphas) {
  if (preds.size() != truth.size())
    throw MismatchError("records", std::to_string(preds.size()) + " predictions for " +
                                       std::to_string(truth.size()) + " manifest records");
  std::vector<SpanPair> pairs;
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].video_id != truth[i].video_id)
      throw MismatchError("video_id", "prediction " + std::to_string(i + 1) + " is for '" + preds[i].video_id +
                                          "', manifest has '" + truth[i].video_id + "'");
    const Span p{preds[i].pred_start_s, preds[i].pred_end_s};
    const Span g{truth[i].start_s, truth[i].end_s};
    pairs.push_back({p, g});
    out.push_back({preds[i].video_id, p.start, p.end, tiou(p, g)});
  }
  return summarize(std::move(pairs), std::move(out), alphas);
}

std::vector<CompareRow> compare_samplers(const RunConfig& cfg, std::span<const std::string> modes,
                                         std::span<const std::uint64_t> seeds, std::span<const double> alphas) {
  if (modes.empty()) throw UsageError("compare-samplers needs at least one mode");
  if (seeds.empty()) throw UsageError("compare-samplers needs at least one seed");
  std::vector<SamplerMode> parsed;
  for (const auto& m : modes) parsed.push_back(parse_mode("modes", m));
  cfg.validate();
  const Datasets data = make_datasets(cfg);

  const std::size_t cells = parsed.size() * seeds.size();
  std::vector<EvalResult> results(cells);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      try {
        RunConfig run = cfg;
        run.sampler.mode = parsed[c / seeds.size()];
        run.seed = seeds[c % seeds.size()];
        run.metrics_subset = 0;
        TrainResult tr = train_model(run, data.train);
        results[c] = evaluate(tr.model, run, data.eval, alphas);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cells);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<CompareRow> rows;
  const double k = 1.0 / static_cast<double>(seeds.size());
  for (std::size_t mi = 0; mi < parsed.size(); ++mi) {
    CompareRow row;
    row.mode = std::string(to_string(parsed[mi]));
    row.recalls.assign(alphas.size(), 0.0);
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const EvalResult& r = results[mi * seeds.size() + si];
      for (std::size_t a = 0; a < alphas.size(); ++a) row.recalls[a] += r.recalls[a] * k;
      row.miou += r.miou * k;
      row.seed_miou.push_back(r.miou);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) { return a.miou > b.miou; });
  return rows;
}

void write_compare_table(std::ostream& os, std::span<const CompareRow> rows, std::span<const double> alphas) {
  os << "mode";
  for (double a : alphas) os << ",R@" << a;
  os << ",miou\n";
  for (const auto& r : rows) {
    os << r.mode;
    for (double v : r.recalls) os << ',' << std::fixed << std::setprecision(4) << v;
    os << ',' << std::fixed << std::setprecision(4) << r.miou << '\n';
    os.unsetf(std::ios::floatfield);
  }
}

}  // namespace momentloc
