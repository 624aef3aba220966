// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "diffmath.hpp"
#include "errors.hpp"
#include "losses.hpp"
#include "memory.hpp"
#include "pipeline.hpp"
#include "sampling.hpp"

using namespace momentloc;
using namespace momentloc::diffmath;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome bucket_math() {
  Rng rng(2024);
  int bad = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::int64_t n = rng.uniform_int(1, 100000);
    const std::int64_t b = rng.uniform_int(1, n);
    const BucketPlan plan = make_bucket_plan(n, b);
    if (plan.m_buckets() > b) ++bad;
    std::int64_t next = 1;
    for (const auto& r : plan.bounds()) {
      if (r.lo != next || r.hi < r.lo) ++bad;
      next = r.hi + 1;
    }
    if (next != n + 1) ++bad;
  }
  const BucketPlan p = make_bucket_plan(1000, 200);
  bool exact = p.m_buckets() == 200;
  for (const auto& r : p.bounds()) exact = exact && r.hi - r.lo + 1 == 5;
  return {bad == 0 && exact, fmt("violations=%d, (1000,200) -> %lld buckets of width 5: %s", bad,
                                 static_cast<long long>(p.m_buckets()), exact ? "yes" : "no")};
}

Outcome sbfs_uniformity() {
  const std::int64_t n = 1000, b = 200, draws = 100000;
  const FeatureSequence seq(Matrix(static_cast<std::size_t>(n), 1), 25.0, n * 16);
  const BucketPlan plan = make_bucket_plan(n, b);
  std::vector<std::array<std::int64_t, 5>> counts(static_cast<std::size_t>(b), std::array<std::int64_t, 5>{});
  Rng rng(7);
  for (std::int64_t d = 0; d < draws; ++d) {
    const SampledSequence s = sbfs_sample(seq, plan, rng);
    for (std::size_t k = 0; k < s.source_index.size(); ++k)
      ++counts[k][static_cast<std::size_t>(s.source_index[k] - plan.bounds()[k].lo)];
  }
  // Chi-square with 4 degrees of freedom; upper 1% point.
  const double critical = 13.2767;
  const double expected = static_cast<double>(draws) / 5.0;
  int accepted = 0;
  double worst = 0.0;
  for (const auto& c : counts) {
    double chi = 0.0;
    for (std::int64_t v : c) chi += (static_cast<double>(v) - expected) * (static_cast<double>(v) - expected) / expected;
    worst = std::max(worst, chi);
    if (chi <= critical) ++accepted;
  }
  return {accepted >= 195, fmt("%d/200 buckets not rejected at p=0.01 (max chi2 %.3f)", accepted, worst)};
}

Outcome gradient_suite() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.loc_layers = 2;
  cfg.loc_heads = 2;
  cfg.text_layers = 1;
  cfg.text_heads = 2;
  cfg.buckets = 8;
  cfg.vocab = 8;
  cfg.d_video = 6;
  cfg.max_text_len = 8;
  cfg.max_video_len = 8;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    // Kernels on their own.
    const auto tgt = make_soft_labels(rng.uniform_int(1, 8), 8, 1);
    Matrix logits(8, 1), logits2(8, 1), att_logits(8, 8);
    for (double& v : logits.values()) v = rng.normal();
    for (double& v : logits2.values()) v = rng.normal();
    for (double& v : att_logits.values()) v = rng.normal();
    for (std::size_t i = 0; i < 8; ++i) {
      logits(i, 0) += 0.5 * static_cast<double>(i);
      logits2(i, 0) -= 0.5 * static_cast<double>(i);
    }
    const auto g = make_guidance(3, 5, 2, 3);
    worst = std::max(worst, grad_check([&](Tape&, Var v) { return kl_loss(softmax(v, 0), tgt); }, logits));
    worst = std::max(worst, grad_check([&](Tape&, Var v) {
                       const Var a[] = {softmax(v, 1), softmax(scale(v, 0.5), 1)};
                       return attention_guidance_loss(a, g);
                     }, att_logits));
    worst = std::max(worst, grad_check([&](Tape& t, Var v) {
                       return temporal_order_loss(softmax(v, 0), softmax(t.constant(logits2), 0));
                     }, logits));

    // Every loss term through the model, four features in eight buckets.
    Model model(cfg, seed + 100);
    Matrix feats(4, 6);
    for (double& v : feats.values()) v = rng.normal();
    const FeatureSequence seq(std::move(feats), 25.0, 64);
    const auto ann = make_annotation(seq, {1, 4, 6}, 0.5, 1.6);
    SamplerSettings st;
    st.buckets = 8;
    const PreparedExample ex = prepare_example(seq, ann, st, Phase::train, rng);
    if (ex.sampled.rows() != 4) return {false, "expected m=4"};
    const std::vector<std::int32_t> toks{1, 4, 6};
    const auto params = model.parameters();
    for (int combo = 0; combo < 4; ++combo) {
      LossOptions o;
      o.enable_att = combo & 1;
      o.enable_se = combo & 2;
      worst = std::max(worst, grad_check_params([&](Tape& t) { return example_loss(t, model, toks, ex, o); },
                                                params, 1e-5, 8));
    }
  }
  return {worst < 1e-4, fmt("max relative error %.3e over 5 seeds", worst)};
}

Outcome loss_oracles() {
  Tape t;
  const Var a[] = {t.leaf(Matrix(3, 3, 1.0 / 3.0))};
  const double att = attention_guidance_loss(a, make_guidance(1, 2, 1, 1)).scalar();
  Matrix first(5, 1), last(5, 1);
  first(0, 0) = 1.0;
  last(4, 0) = 1.0;
  const double h0 = temporal_order_loss(t.leaf(first), t.leaf(last)).scalar();
  const double h4 = temporal_order_loss(t.leaf(last), t.leaf(first)).scalar();
  const double kl = kl_loss(t.leaf(Matrix(4, 1, 0.25)), make_soft_labels(3, 4, 0)).scalar();
  const double e_att = std::abs(att - 5.0 * std::log(1.5));
  const double e_kl = std::abs(kl - std::log(4.0));
  return {e_att < 1e-9 && h0 == 0.0 && h4 == 4.0 && e_kl < 1e-9,
          fmt("guidance err %.1e, hinge %g and %g, KL err %.1e", e_att, h0, h4, e_kl)};
}

Outcome memory_plateau() {
  ModelConfig cfg;
  cfg.buckets = 200;
  const std::vector<double> durations{30, 60, 120, 240, 480};
  const std::vector<std::string> modes{"sbfs", "max", "mean", "none"};
  const BenchOptions opts;
  const auto reports = bench_curve(durations, modes, cfg, opts);
  const double sat = saturation_duration(cfg.buckets, feature_rate(opts));
  bool ok = true;
  std::map<std::string, std::vector<std::int64_t>> past;
  std::int64_t prev_none = -1;
  double worst_track = 0.0;
  for (const auto& r : reports) {
    if (r.mode == "none") {
      ok = ok && r.measured_bytes > prev_none;
      prev_none = r.measured_bytes;
      const auto analytic = analytic_activation_bytes(cfg, opts.text_len, r.sequence_len - opts.text_len - 2, 1, 8);
      worst_track = std::max(worst_track, std::abs(static_cast<double>(r.measured_bytes) / static_cast<double>(analytic) - 1.0));
    } else if (r.duration_s > sat) {
      past[r.mode].push_back(r.measured_bytes);
    }
  }
  std::string plateau;
  for (const auto& [mode, v] : past) {
    bool same = v.size() >= 2;
    for (auto x : v) same = same && x == v.front();
    ok = ok && same;
    plateau += fmt("%s=%lld%s ", mode.c_str(), static_cast<long long>(v.front()), same ? "" : "(varies)");
  }
  ok = ok && past.size() == 3 && worst_track <= 0.10;
  return {ok, fmt("saturation %.0f s; plateau %s; none increasing, analytic tracking within %.1f%%", sat,
                  plateau.c_str(), 100.0 * worst_track)};
}

// Default synthetic suite, three seeds.
struct Trend {
  std::vector<double> sbfs, random, untrained, att_on, att_off;
};

double train_and_eval(RunConfig cfg, const Datasets& ds) {
  TrainResult r = train_model(cfg, ds.train);
  return evaluate(r.model, cfg, ds.eval).miou;
}

const Trend& trend_runs() {
  static const Trend trend = [] {
    Trend t;
    const RunConfig base;
    const Datasets ds = make_datasets(base);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      RunConfig c = base;
      c.seed = seed;
      t.sbfs.push_back(train_and_eval(c, ds));
      RunConfig r = c;
      r.sampler.mode = SamplerMode::random;
      t.random.push_back(train_and_eval(r, ds));
      RunConfig u = c;
      u.epochs = 0;
      t.untrained.push_back(train_and_eval(u, ds));
      RunConfig on = c;
      on.loss.enable_se = false;
      t.att_on.push_back(train_and_eval(on, ds));
      RunConfig off = on;
      off.loss.enable_att = false;
      t.att_off.push_back(train_and_eval(off, ds));
      std::printf("  seed %llu: sbfs %.4f random %.4f untrained %.4f | kl+att %.4f kl-only %.4f\n",
                  static_cast<unsigned long long>(seed), t.sbfs.back(), t.random.back(), t.untrained.back(),
                  t.att_on.back(), t.att_off.back());
      std::fflush(stdout);
    }
    return t;
  }();
  return trend;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Outcome end_to_end_trend() {
  const Trend& t = trend_runs();
  const double s = mean(t.sbfs), r = mean(t.random), u = mean(t.untrained);
  return {s - r >= 0.10 && s - u >= 0.25,
          fmt("mIoU sbfs %.4f, random %.4f (+%.4f, need 0.10), untrained %.4f (+%.4f, need 0.25)", s, r, s - r, u,
              s - u)};
}

Outcome ablation_attention() {
  const Trend& t = trend_runs();
  int wins = 0;
  for (std::size_t i = 0; i < t.att_on.size(); ++i) wins += t.att_on[i] > t.att_off[i];
  return {wins >= 2, fmt("kl+att beats kl-only in %d/3 seeds (means %.4f vs %.4f)", wins, mean(t.att_on),
                         mean(t.att_off))};
}

Outcome max_of_uniforms() {
  int hits = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(trial);
    double m = 0.0;
    for (int i = 0; i < 10000; ++i) m = std::max(m, rng.uniform());
    hits += m >= 0.999;
  }
  return {hits >= 99, fmt("%d/100 trials reached 0.999", hits)};
}

Outcome format_round_trips() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "momentloc_acceptance_formats";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  SyntheticSpec spec;
  spec.n_min = 5;
  spec.n_max = 40;
  SyntheticGenerator gen(spec);
  const auto examples = gen.dataset(1, 20);
  const std::string manifest = write_dataset(dir.string(), "m.jsonl", examples);
  const auto back = load_dataset(manifest);
  ok = ok && back.size() == examples.size();
  for (std::size_t i = 0; ok && i < back.size(); ++i) {
    ok = back[i].features.features() == examples[i].features.features() &&
         back[i].features.fps() == examples[i].features.fps() &&
         back[i].annotation.start_s == examples[i].annotation.start_s &&
         back[i].annotation.end_s == examples[i].annotation.end_s &&
         back[i].annotation.query_tokens == examples[i].annotation.query_tokens;
  }
  const auto records = read_manifest(manifest);
  write_manifest((dir / "m2.jsonl").string(), records);
  ok = ok && read_manifest((dir / "m2.jsonl").string()) == records;

  // Every truncation and every single-byte corruption of the header.
  const std::string feat = (dir / "features" / (examples[0].video_id + ".lgfe")).string();
  std::ifstream in(feat, std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string probe = (dir / "probe.lgfe").string();
  int rejected = 0, cases = 0;
  auto expect_error = [&](const std::string& content) {
    std::ofstream(probe, std::ios::binary | std::ios::trunc) << content;
    ++cases;
    try {
      (void)read_features(probe);
    } catch (const FormatError& e) {
      if (e.offset() <= content.size()) ++rejected;
    }
  };
  for (std::size_t len = 0; len < bytes.size(); ++len) expect_error(bytes.substr(0, len));
  expect_error(bytes + '\0');
  for (std::size_t i : {0, 1, 2, 3, 4}) {
    std::string c = bytes;
    c[i] = static_cast<char>(c[i] ^ 0x5a);
    expect_error(c);
  }
  std::string nan = bytes;
  const float q = std::nanf("");
  std::memcpy(nan.data() + kFeatureHeaderBytes, &q, 4);
  expect_error(nan);

  int record_errors = 0;
  const std::string lines[] = {"{\"video_id\":1}", "not json", "[]",
                               R"({"video_id":"a","feature_path":"a","duration_s":5,"query_tokens":[1],"start_s":4,"end_s":2})"};
  for (const auto& l : lines) {
    std::ofstream((dir / "bad.jsonl").string(), std::ios::trunc) << "\n" << l << "\n";
    try {
      (void)read_manifest((dir / "bad.jsonl").string());
    } catch (const RecordError& e) {
      record_errors += e.line() == 2;
    }
  }
  fs::remove_all(dir);
  ok = ok && rejected == cases && record_errors == 4;
  return {ok, fmt("20 examples and manifest bit-exact; %d/%d corrupt feature files and %d/4 bad records rejected "
                  "with positions",
                  rejected, cases, record_errors)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"bucket_math", bucket_math},
      {"sbfs_uniformity", sbfs_uniformity},
      {"gradient_suite", gradient_suite},
      {"loss_oracles", loss_oracles},
      {"memory_plateau", memory_plateau},
      {"end_to_end_trend", end_to_end_trend},
      {"ablation_attention", ablation_attention},
      {"max_of_uniforms", max_of_uniforms},
      {"format_round_trips", format_round_trips},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-20s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
