// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include <doctest.h>

#include <cmath>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "helpers.hpp"

using namespace momentloc;

TEST_CASE("FeatureSequence validates its inputs") {
  CHECK_THROWS_AS(FeatureSequence(Matrix(), 25.0, 10), DomainError);
  CHECK_THROWS_AS(FeatureSequence(Matrix(2, 2), 0.0, 10), DomainError);
  CHECK_THROWS_AS(FeatureSequence(Matrix(2, 2), 25.0, 0), DomainError);
  Matrix bad(2, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(FeatureSequence(bad, 25.0, 10), DomainError);
  const FeatureSequence ok(Matrix(4, 3), 25.0, 100);
  CHECK(ok.length() == 4);
  CHECK(ok.width() == 3);
  CHECK(ok.duration() == doctest::Approx(4.0));
}

TEST_CASE("frame_time_to_feature_index") {
  const FeatureSequence seq(Matrix(100, 2), 25.0, 2500);
  CHECK(frame_time_to_feature_index(0.0, seq) == 1);
  CHECK(frame_time_to_feature_index(seq.duration(), seq) == 100);
  CHECK(frame_time_to_feature_index(50.0, seq) == 50);
  // 0.5 s -> 0.5 features rounds half up.
  CHECK(frame_time_to_feature_index(0.5, seq) == 1);
  CHECK(frame_time_to_feature_index(1.5, seq) == 2);
  CHECK_THROWS_AS(frame_time_to_feature_index(-0.1, seq), DomainError);
  CHECK_THROWS_AS(frame_time_to_feature_index(100.5, seq), DomainError);

  std::int64_t prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const std::int64_t k = frame_time_to_feature_index(i * 0.1, seq);
    CHECK(k >= prev);
    prev = k;
  }
}

TEST_CASE("make_annotation orders indices and rejects bad spans") {
  const FeatureSequence seq(Matrix(100, 2), 25.0, 2500);
  const auto ann = make_annotation(seq, {3, 1}, 10.0, 20.0);
  CHECK(ann.feat_start == 10);
  CHECK(ann.feat_end == 20);
  CHECK_THROWS_AS(make_annotation(seq, {3}, 20.0, 10.0), DomainError);
  CHECK_THROWS_AS(make_annotation(seq, {}, 1.0, 2.0), DomainError);
  CHECK_THROWS_AS(make_annotation(seq, {1}, 1.0, 200.0), DomainError);
}

TEST_CASE("bucket_index_to_span") {
  CHECK(bucket_index_to_span(1, 200, 200.0) == Span{0.0, 1.0});
  CHECK(bucket_index_to_span(200, 200, 200.0) == Span{199.0, 200.0});
  CHECK(bucket_index_to_span(101, 200, 400.0) == Span{200.0, 202.0});
  CHECK_THROWS_AS(bucket_index_to_span(0, 200, 200.0), DomainError);
  CHECK_THROWS_AS(bucket_index_to_span(201, 200, 200.0), DomainError);
}

TEST_CASE("tiou") {
  CHECK(tiou({0, 10}, {0, 10}) == 1.0);
  CHECK(tiou({0, 10}, {20, 30}) == 0.0);
  CHECK(tiou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(tiou({0, 10}, {10, 20}) == 0.0);
  CHECK(tiou({2, 2}, {0, 10}) == 0.0);
  CHECK(tiou({2, 2}, {2, 2}) == 0.0);
  CHECK(tiou({2, 4}, {0, 10}) == doctest::Approx(0.2));

  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double a0 = rng.uniform() * 10, a1 = a0 + rng.uniform() * 5;
    const double b0 = rng.uniform() * 10, b1 = b0 + rng.uniform() * 5;
    const double x = tiou({a0, a1}, {b0, b1});
    CHECK(x == tiou({b0, b1}, {a0, a1}));
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("recall_at and mean_iou") {
  const std::vector<SpanPair> same{{{0, 10}, {0, 10}}, {{3, 4}, {3, 4}}};
  const std::vector<SpanPair> disjoint{{{0, 1}, {2, 3}}, {{5, 6}, {0, 1}}};
  CHECK(recall_at(0.7, same) == 1.0);
  CHECK(recall_at(0.3, disjoint) == 0.0);

  // tIoUs 1.0, 0.4, 0.2
  const std::vector<SpanPair> mixed{{{0, 10}, {0, 10}}, {{0, 4}, {0, 10}}, {{0, 2}, {0, 10}}};
  CHECK(recall_at(0.5, mixed) == doctest::Approx(1.0 / 3.0));
  CHECK(recall_at(0.4, mixed) == doctest::Approx(2.0 / 3.0));  // inclusive threshold

  CHECK(mean_iou(std::vector<SpanPair>{{{0, 10}, {0, 10}}}) == 1.0);
  CHECK(mean_iou(std::vector<SpanPair>{{{0, 10}, {0, 10}}, {{0, 1}, {5, 6}}}) == 0.5);
  const std::vector<SpanPair> three{{{0, 10}, {0, 10}}, {{0, 10}, {5, 15}}, {{0, 1}, {5, 6}}};
  CHECK(mean_iou(three) == doctest::Approx(0.4444).epsilon(1e-4));

  CHECK_THROWS_AS(recall_at(0.5, std::vector<SpanPair>{}), DomainError);
  CHECK_THROWS_AS(mean_iou(std::vector<SpanPair>{}), DomainError);

  Rng rng(3);
  std::vector<SpanPair> pairs;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform() * 10, b = rng.uniform() * 10;
    pairs.push_back({{a, a + 1 + rng.uniform() * 3}, {b, b + 1 + rng.uniform() * 3}});
  }
  double prev = 1.0;
  for (double alpha = 0.05; alpha < 1.0; alpha += 0.05) {
    const double r = recall_at(alpha, pairs);
    CHECK(r <= prev);
    prev = r;
  }
}
