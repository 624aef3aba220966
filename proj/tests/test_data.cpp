// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "data.hpp"
#include "errors.hpp"
#include "helpers.hpp"

using namespace momentloc;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& b) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

void spit(const std::string& path, const std::string& text) { spit(path, std::vector<char>(text.begin(), text.end())); }

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_min = 40;
  s.n_max = 60;
  s.d_v = 8;
  s.vocab = 5;
  s.query_len = 3;
  return s;
}

}  // namespace

TEST_CASE("SyntheticSpec validation") {
  SyntheticSpec s = small_spec();
  CHECK_NOTHROW(s.validate());
  s.moment_frac_min = 0.0;
  CHECK_THROWS_AS(s.validate(), DomainError);
  s = small_spec();
  s.moment_frac_min = 0.5;
  s.moment_frac_max = 0.4;
  CHECK_THROWS_AS(s.validate(), DomainError);
  s = small_spec();
  s.signal_strength = -1.0;
  CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("gen_example is deterministic and well formed") {
  const SyntheticSpec spec = small_spec();
  Rng a(5), b(5);
  const Example x = gen_example(spec, a);
  const Example y = gen_example(spec, b);
  CHECK(x.features.features() == y.features.features());
  CHECK(x.annotation.query_tokens == y.annotation.query_tokens);
  CHECK(x.annotation.start_s == y.annotation.start_s);
  CHECK(x.features.length() >= 40);
  CHECK(x.features.length() <= 60);
  CHECK(x.annotation.query_tokens.size() == 3);
  CHECK(0.0 <= x.annotation.start_s);
  CHECK(x.annotation.start_s < x.annotation.end_s);
  CHECK(x.annotation.end_s <= x.features.duration());
  CHECK(1 <= x.annotation.feat_start);
  CHECK(x.annotation.feat_start <= x.annotation.feat_end);
  CHECK(x.annotation.feat_end <= x.features.length());
}

TEST_CASE("full-length moments cover the whole video") {
  SyntheticSpec spec = small_spec();
  spec.moment_frac_min = spec.moment_frac_max = 1.0;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Example e = gen_example(spec, rng);
    CHECK(e.annotation.feat_start == 1);
    CHECK(e.annotation.feat_end == e.features.length());
  }
}

TEST_CASE("zero signal makes features independent of the query") {
  SyntheticSpec spec = small_spec();
  spec.signal_strength = 0.0;
  SyntheticGenerator gen(spec);
  // Same stream, different query: the background draw order does not depend on
  // the token, so the features coincide whenever n matches.
  Rng a(3);
  const Example e = gen.generate(a);
  Rng b(3);
  Example f = gen.generate(b);
  CHECK(e.features.features() == f.features.features());
  double mean = 0.0;
  for (double v : e.features.features().values()) mean += v;
  mean /= static_cast<double>(e.features.features().size());
  CHECK(std::abs(mean) < 0.2);
}

TEST_CASE("mean inside minus mean outside recovers the planted pattern") {
  SyntheticSpec spec = small_spec();
  spec.signal_strength = 1.5;
  spec.vocab = 1;
  SyntheticGenerator gen(spec);
  Rng rng(9);
  std::vector<double> in(8, 0.0), out(8, 0.0);
  double n_in = 0, n_out = 0;
  for (int i = 0; i < 400; ++i) {
    const Example e = gen.generate(rng);
    for (std::int64_t r = 1; r <= e.features.length(); ++r) {
      const bool inside = r >= e.annotation.feat_start && r <= e.annotation.feat_end;
      auto row = e.features.features().row(static_cast<std::size_t>(r - 1));
      for (std::size_t j = 0; j < 8; ++j) (inside ? in : out)[j] += row[j];
      (inside ? n_in : n_out) += 1;
    }
  }
  const auto p = gen.patterns().row(0);
  for (std::size_t j = 0; j < 8; ++j) CHECK(in[j] / n_in - out[j] / n_out == doctest::Approx(1.5 * p[j]).epsilon(0.1).scale(1.0));
  double norm = 0.0;
  for (double v : p) norm += v * v;
  CHECK(norm == doctest::Approx(1.0));
}

TEST_CASE("dataset splits share patterns but not examples") {
  SyntheticGenerator gen(small_spec());
  const auto a = gen.dataset(1, 5);
  const auto b = gen.dataset(2, 5);
  const auto a2 = gen.dataset(1, 5);
  REQUIRE(a.size() == 5);
  CHECK(a[0].features.features() == a2[0].features.features());
  CHECK(!(a[0].features.features() == b[0].features.features()));
  CHECK(a[0].video_id != b[0].video_id);
}

TEST_CASE("feature files round-trip bit-exactly") {
  test::TempDir dir("feat");
  Rng rng(2);
  const Example e = gen_example(small_spec(), rng);
  const std::string path = dir.file("x.lgfe");
  write_features(path, e.features);
  const auto bytes = slurp(path);
  const std::size_t n = static_cast<std::size_t>(e.features.length()), d = 8;
  CHECK(bytes.size() == kFeatureHeaderBytes + n * d * 4);
  const FeatureSequence back = read_features(path);
  CHECK(back.features() == e.features.features());
  CHECK(back.fps() == e.features.fps());
  CHECK(back.frame_count() == e.features.frame_count());
}

TEST_CASE("corrupted feature files report offsets") {
  test::TempDir dir("featbad");
  const FeatureSequence seq(Matrix(3, 2, 0.5), 25.0, 48);
  const std::string path = dir.file("x.lgfe");
  write_features(path, seq);
  const auto good = slurp(path);
  auto expect_offset = [&](const std::vector<char>& b, std::uint64_t offset) {
    spit(path, b);
    try {
      read_features(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == offset);
    }
  };
  auto bad = good;
  bad[1] = 'X';
  expect_offset(bad, 0);
  bad = good;
  bad[4] = 9;
  expect_offset(bad, 4);
  expect_offset(std::vector<char>(good.begin(), good.begin() + 10), 10);
  expect_offset(std::vector<char>(good.begin(), good.end() - 1), kFeatureHeaderBytes);
  bad = good;
  bad.push_back(0);
  expect_offset(bad, good.size());
  expect_offset({}, 0);
  CHECK_THROWS_AS(read_features(dir.file("missing.lgfe")), IoError);
}

TEST_CASE("manifests round-trip and reject bad records") {
  test::TempDir dir("manifest");
  const std::string path = dir.file("m.jsonl");
  spit(path, std::string());
  CHECK(read_manifest(path).empty());

  const std::vector<ManifestRecord> recs{{"a", "f/a.lgfe", 10.0, {1, 2}, 0.5, 3.25},
                                         {"b", "f/b.lgfe", 12.5, {4}, 1.0, 12.5},
                                         {"c", "/abs/c.lgfe", 7.0, {0, 0, 3}, 0.0, 0.125}};
  write_manifest(path, recs);
  CHECK(read_manifest(path) == recs);

  auto expect_line = [&](const std::string& text, std::size_t line) {
    spit(path, text);
    try {
      read_manifest(path);
      FAIL("expected a record error");
    } catch (const RecordError& e) {
      CHECK(e.line() == line);
    }
  };
  const std::string ok =
      R"({"video_id":"a","feature_path":"a.lgfe","duration_s":10,"query_tokens":[1],"start_s":1,"end_s":2})";
  expect_line(ok + "\n" + R"({"video_id":"a","feature_path":"a.lgfe","duration_s":10,"query_tokens":[1],"start_s":3,"end_s":2})", 2);
  expect_line(ok + "\n\n" + R"({"video_id":"a","duration_s":10,"query_tokens":[1],"start_s":1,"end_s":2})", 3);
  expect_line("{not json", 1);
  expect_line(R"([1,2])", 1);
  expect_line(R"({"video_id":"a","feature_path":"a.lgfe","duration_s":10,"query_tokens":[],"start_s":1,"end_s":2})", 1);
  expect_line(R"({"video_id":"a","feature_path":"a.lgfe","duration_s":10,"query_tokens":[1],"start_s":1,"end_s":20})", 1);

  spit(path, R"({"video_id":"a","feature_path":"a.lgfe","duration_s":10,"query_tokens":[1],"start_s":1,"end_s":2,"extra":5})");
  std::vector<std::string> warnings;
  CHECK(read_manifest(path, &warnings).size() == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("extra") != std::string::npos);
}

TEST_CASE("datasets round-trip through disk") {
  test::TempDir dir("dataset");
  SyntheticGenerator gen(small_spec());
  const auto examples = gen.dataset(1, 4);
  const std::string manifest = write_dataset(dir.path().string(), "train.jsonl", examples);
  const auto back = load_dataset(manifest);
  REQUIRE(back.size() == examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].video_id == examples[i].video_id);
    CHECK(back[i].features.features() == examples[i].features.features());
    CHECK(back[i].annotation.feat_start == examples[i].annotation.feat_start);
    CHECK(back[i].annotation.feat_end == examples[i].annotation.feat_end);
  }
}

TEST_CASE("predictions round-trip") {
  test::TempDir dir("preds");
  const std::vector<PredictionRecord> p{{"a", 1.0, 2.5, 0.5}, {"b", 0.0, 0.0, 0.0}};
  write_predictions(dir.file("p.jsonl"), p);
  const auto back = read_predictions(dir.file("p.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].video_id == "a");
  CHECK(back[0].pred_end_s == 2.5);
  CHECK(back[1].tiou == 0.0);
  spit(dir.file("bad.jsonl"), std::string(R"({"video_id":"a","pred_start_s":3,"pred_end_s":1})"));
  CHECK_THROWS_AS(read_predictions(dir.file("bad.jsonl")), RecordError);
}
