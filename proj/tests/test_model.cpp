// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "errors.hpp"
#include "helpers.hpp"
#include "model.hpp"

using namespace momentloc;
using namespace momentloc::diffmath;
using test::random_sequence;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.loc_layers = 2;
  c.loc_heads = 2;
  c.text_layers = 1;
  c.text_heads = 2;
  c.buckets = 8;
  c.vocab = 10;
  c.d_video = 6;
  c.max_text_len = 8;
  c.max_video_len = 16;
  return c;
}

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix delta(std::size_t n, std::size_t at) {
  Matrix m(n, 1);
  m(at - 1, 0) = 1.0;
  return m;
}

PreparedExample prepared(const ModelConfig& cfg, std::uint64_t seed, std::int64_t n = 40) {
  const auto seq = random_sequence(n, cfg.d_video, seed);
  Rng rng(seed);
  const double d = seq.duration();
  const auto ann = make_annotation(seq, {1, 2, 3}, 0.2 * d, 0.6 * d);
  SamplerSettings st;
  st.buckets = cfg.buckets;
  return prepare_example(seq, ann, st, Phase::train, rng);
}

double sum_column(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s;
}

}  // namespace

TEST_CASE("ModelConfig validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.loc_heads = 3;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config();
  c.vocab = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK_THROWS_AS(Model(c, 0), DomainError);
}

TEST_CASE("parameters are named, unique and deterministic per seed") {
  Model a(small_config(), 1), b(small_config(), 1), c(small_config(), 2);
  std::set<std::string> names;
  for (const auto* p : a.parameters()) CHECK(names.insert(p->name).second);
  CHECK(a.parameter_count() > 0);
  CHECK(a.parameter("video.proj.weight").value == b.parameter("video.proj.weight").value);
  CHECK(!(a.parameter("video.proj.weight").value == c.parameter("video.proj.weight").value));
  CHECK_THROWS_AS(a.parameter("nope"), DomainError);

  Model copy = a;
  copy.parameter("video.proj.bias").value(0, 0) = 42.0;
  CHECK(a.parameter("video.proj.bias").value(0, 0) == 0.0);
}

TEST_CASE("text_encode shapes and errors") {
  const ModelConfig cfg = small_config();
  Model m(cfg, 3);
  Tape t;
  const std::int32_t toks[] = {1, 4, 2};
  std::vector<Var> attn;
  const Var h = m.text_encode(t, toks, &attn);
  CHECK(h.rows() == 5);
  CHECK(h.cols() == 16);
  CHECK(attn.size() == static_cast<std::size_t>(cfg.text_layers * cfg.text_heads));

  const std::vector<std::int32_t> long_q(9, 1);
  CHECK_THROWS_AS(m.text_encode(t, long_q, nullptr), DomainError);
  const std::int32_t oov[] = {10};
  CHECK_THROWS_AS(m.text_encode(t, oov, nullptr), DomainError);
  CHECK_THROWS_AS(m.text_encode(t, std::span<const std::int32_t>{}, nullptr), DomainError);
}

TEST_CASE("text_encode is permutation-equivariant without positions") {
  Model m(small_config(), 4);
  m.parameter("text.position_embedding").value.fill(0.0);
  Tape t;
  const std::int32_t ab[] = {3, 7};
  const std::int32_t ba[] = {7, 3};
  const Matrix x = m.text_encode(t, ab, nullptr).value();
  const Matrix y = m.text_encode(t, ba, nullptr).value();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    CHECK(x(0, c) == doctest::Approx(y(0, c)).epsilon(1e-12));
    CHECK(x(1, c) == doctest::Approx(y(2, c)).epsilon(1e-12));
    CHECK(x(2, c) == doctest::Approx(y(1, c)).epsilon(1e-12));
    CHECK(x(3, c) == doctest::Approx(y(3, c)).epsilon(1e-12));
  }
}

TEST_CASE("localize output shapes and distributions") {
  const ModelConfig cfg = small_config();
  Model m(cfg, 5);
  const auto ex = prepared(cfg, 1);
  Tape t;
  const std::int32_t toks[] = {1, 2, 3};
  const auto out = m.forward(t, toks, ex.sampled.features);
  const std::size_t v = ex.sampled.features.rows();
  CHECK(out.start_probs.rows() == v);
  CHECK(out.end_probs.rows() == v);
  CHECK(std::abs(sum_column(out.start_probs.value()) - 1.0) < 1e-6);
  CHECK(std::abs(sum_column(out.end_probs.value()) - 1.0) < 1e-6);
  for (double p : out.start_probs.value().values()) CHECK(p >= 0.0);
  REQUIRE(out.attention.size() == static_cast<std::size_t>(cfg.loc_layers * cfg.loc_heads));
  const std::size_t s = 3 + 2 + v;
  CHECK(out.joint_states.rows() == s);
  CHECK(out.text_positions == 5);
  for (const Var& a : out.attention) {
    REQUIRE(a.rows() == s);
    REQUIRE(a.cols() == s);
    for (std::size_t r = 0; r < s; ++r) {
      double total = 0.0;
      for (double x : a.value().row(r)) total += x;
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }

  Matrix wrong(4, cfg.d_video + 1);
  CHECK_THROWS_AS(m.forward(t, toks, wrong), DomainError);
  CHECK_THROWS_AS(m.forward(t, toks, Matrix(17, cfg.d_video)), DomainError);
}

TEST_CASE("zero weights give uniform distributions") {
  Model m(small_config(), 6);
  for (Parameter* p : m.parameters()) p->value.fill(0.0);
  Tape t;
  const std::int32_t toks[] = {1};
  const auto out = m.forward(t, toks, random_sequence(5, 6, 1).features());
  for (double p : out.start_probs.value().values()) CHECK(p == doctest::Approx(0.2));
  for (double p : out.end_probs.value().values()) CHECK(p == doctest::Approx(0.2));
}

TEST_CASE("identical sampled inputs give identical outputs") {
  Model m(small_config(), 7);
  const auto a = random_sequence(8, 6, 2);
  Tape t1, t2;
  const std::int32_t toks[] = {4, 5};
  const auto x = m.forward(t1, toks, a.features());
  const auto y = m.forward(t2, toks, a.features());
  CHECK(x.start_probs.value() == y.start_probs.value());
  CHECK(x.end_probs.value() == y.end_probs.value());
}

TEST_CASE("predict_span decoding") {
  Tape t;
  const auto plan = make_bucket_plan(160, 16);
  LocalizationOutput out;
  out.start_probs = t.leaf(delta(16, 3));
  out.end_probs = t.leaf(delta(16, 7));
  CHECK(predict_span(out, plan, 160.0) == Span{20.0, 70.0});
  std::swap(out.start_probs, out.end_probs);
  CHECK(predict_span(out, plan, 160.0) == Span{20.0, 70.0});
  out.start_probs = t.leaf(Matrix(16, 1, 1.0 / 16));
  out.end_probs = t.leaf(Matrix(16, 1, 1.0 / 16));
  CHECK(predict_span(out, plan, 160.0) == Span{0.0, 10.0});

  // Non-uniform plans convert through source indices.
  const auto odd = BucketPlan::from_bounds(10, 3, {{1, 2}, {3, 7}, {8, 10}});
  out.start_probs = t.leaf(column({0, 1, 0}));
  out.end_probs = t.leaf(column({0, 0.4, 0.6}));
  CHECK(predict_span(out, odd, 5.0) == Span{1.0, 5.0});
}

TEST_CASE("example loss is finite and train_step descends") {
  const ModelConfig cfg = small_config();
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Model m(cfg, seed);
    const auto ex = prepared(cfg, seed);
    const std::vector<std::int32_t> toks{1, 2, 3};
    const BatchItem batch[] = {{toks, &ex}};
    Adam opt(m.parameters(), 1e-3);
    LossOptions opts;
    const double before = train_step(m, opt, batch, opts).total;
    CHECK(std::isfinite(before));
    Tape t;
    const double after = example_loss(t, m, toks, ex, opts).scalar();
    improved += after < before;
  }
  CHECK(improved >= 9);
}

TEST_CASE("distributions stay valid through training") {
  const ModelConfig cfg = small_config();
  Model m(cfg, 11);
  Adam opt(m.parameters(), 1e-2);
  const std::vector<std::int32_t> toks{2};
  for (int step = 0; step < 30; ++step) {
    const auto ex = prepared(cfg, static_cast<std::uint64_t>(step));
    const BatchItem batch[] = {{toks, &ex}};
    train_step(m, opt, batch, LossOptions{});
  }
  Tape t;
  const auto out = m.forward(t, toks, prepared(cfg, 99).sampled.features);
  CHECK(std::abs(sum_column(out.start_probs.value()) - 1.0) < 1e-6);
  CHECK(std::abs(sum_column(out.end_probs.value()) - 1.0) < 1e-6);
}

TEST_CASE("full loss gradient through the model") {
  ModelConfig cfg = small_config();
  cfg.d_model = 8;
  cfg.buckets = 4;
  Model m(cfg, 12);
  const auto ex = prepared(cfg, 3, 20);
  const std::vector<std::int32_t> toks{1, 5};
  for (bool all_heads : {false, true}) {
    LossOptions opts;
    opts.supervise_all_heads = all_heads;
    auto f = [&](Tape& t) { return example_loss(t, m, toks, ex, opts); };
    const auto params = m.parameters();
    const double err = grad_check_params(f, params, 1e-5, 6);
    INFO("max relative error " << err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  test::TempDir dir("ckpt");
  const ModelConfig cfg = small_config();
  Model m(cfg, 13);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, m);
  const Model back = load_checkpoint(path);
  CHECK(back.config() == cfg);
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }

  ModelConfig other = cfg;
  other.d_video = 7;
  try {
    require_same_config(other, back.config());
    FAIL("expected a mismatch");
  } catch (const MismatchError& e) {
    CHECK(e.field() == "d_video");
  }

  std::vector<char> bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto bad = bytes;
  bad[0] = 'X';
  write(bad);
  try {
    load_checkpoint(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  write(std::vector<char>(bytes.begin(), bytes.end() - 3));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  write(longer);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing")), IoError);
}
