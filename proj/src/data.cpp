// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "data.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "binio.hpp"

namespace momentloc {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSpec::validate() const {
  if (num_examples < 0) throw DomainError("SyntheticSpec: num_examples must be >= 0");
  if (n_min < 1 || n_max < n_min) throw DomainError("SyntheticSpec: need 1 <= n_min <= n_max");
  if (d_v < 1 || vocab < 1 || query_len < 1 || frames_per_feature < 1)
    throw DomainError("SyntheticSpec: d_v, vocab, query_len, frames_per_feature must be >= 1");
  if (!(fps > 0.0)) throw DomainError("SyntheticSpec: fps must be > 0");
  if (!(signal_strength >= 0.0)) throw DomainError("SyntheticSpec: signal_strength must be >= 0");
  if (!(moment_frac_min > 0.0 && moment_frac_min <= moment_frac_max && moment_frac_max <= 1.0))
    throw DomainError("SyntheticSpec: need 0 < moment_frac_min <= moment_frac_max <= 1");
}

SyntheticGenerator::SyntheticGenerator(const SyntheticSpec& spec)
    : spec_(spec), patterns_(static_cast<std::size_t>(spec.vocab), static_cast<std::size_t>(spec.d_v)) {
  spec_.validate();
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  const double unit = 1.0 / std::sqrt(static_cast<double>(spec.d_v));
  for (double& v : patterns_.values()) v = (rng.next_u64() >> 63) != 0 ? unit : -unit;
}

Example SyntheticGenerator::generate(Rng& rng, const std::string& video_id) const {
  const std::int64_t n = rng.uniform_int(spec_.n_min, spec_.n_max);
  const std::int64_t frames = n * spec_.frames_per_feature;
  std::vector<std::int32_t> tokens(static_cast<std::size_t>(spec_.query_len));
  for (auto& t : tokens) t = static_cast<std::int32_t>(rng.uniform_int(0, spec_.vocab - 1));

  Matrix feats(static_cast<std::size_t>(n), static_cast<std::size_t>(spec_.d_v));
  for (double& v : feats.values()) v = rng.normal();
  FeatureSequence background(feats, spec_.fps, frames);
  const double duration = background.duration();
  const double frac = spec_.moment_frac_min + (spec_.moment_frac_max - spec_.moment_frac_min) * rng.uniform();
  const double len = frac * duration;
  const double start = (duration - len) * rng.uniform();
  const double end = std::min(duration, start + len);
  MomentAnnotation ann = make_annotation(background, tokens, start, end);

  const auto pattern = patterns_.row(static_cast<std::size_t>(tokens.front()));
  for (std::int64_t i = ann.feat_start; i <= ann.feat_end; ++i) {
    auto row = feats.row(static_cast<std::size_t>(i - 1));
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += spec_.signal_strength * pattern[j];
  }
  for (double& v : feats.values()) v = static_cast<double>(static_cast<float>(v));
  return {video_id, FeatureSequence(std::move(feats), spec_.fps, frames), std::move(ann)};
}

std::vector<Example> SyntheticGenerator::dataset(std::uint64_t split, std::int64_t count) const {
  Rng root(spec_.seed);
  Rng rng = root.fork(split);
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t i = 0; i < count; ++i)
    out.push_back(generate(rng, "s" + std::to_string(split) + "_" + std::to_string(i)));
  return out;
}

Example gen_example(const SyntheticSpec& spec, Rng& rng) { return SyntheticGenerator(spec).generate(rng); }

namespace {
constexpr char kFeatureMagic[4] = {'L', 'G', 'F', 'E'};
}

std::vector<std::uint8_t> encode_features(const FeatureSequence& seq) {
  binio::Writer w;
  w.bytes(kFeatureMagic, 4);
  w.uint<std::uint16_t>(kFeatureFormatVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(seq.length()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(seq.width()));
  w.f32(static_cast<float>(seq.fps()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(seq.frame_count()));
  for (double v : seq.features().values()) w.f32(static_cast<float>(v));
  return w.data();
}

FeatureSequence decode_features(std::vector<std::uint8_t> bytes) {
  binio::Reader r(std::move(bytes));
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) throw FormatError(0, "bad feature-file magic");
  const auto version_at = r.offset();
  if (const auto v = r.uint<std::uint16_t>("version"); v != kFeatureFormatVersion)
    throw FormatError(version_at, "unsupported feature-file version " + std::to_string(v));
  const auto n_at = r.offset();
  const auto n = r.uint<std::uint32_t>("n");
  const auto d = r.uint<std::uint32_t>("d_v");
  if (n == 0 || d == 0) throw FormatError(n_at, "n and d_v must be >= 1");
  const auto fps_at = r.offset();
  const float fps = r.f32("fps");
  if (!(fps > 0.0f) || !std::isfinite(fps)) throw FormatError(fps_at, "fps must be positive");
  const auto l_at = r.offset();
  const auto l = r.uint<std::uint32_t>("frame count");
  if (l == 0) throw FormatError(l_at, "frame count must be >= 1");
  const std::size_t count = static_cast<std::size_t>(n) * d;
  r.need(count * 4, "feature payload");
  Matrix feats(n, d);
  for (double& v : feats.values()) {
    const auto at = r.offset();
    const float f = r.f32("feature payload");
    if (!std::isfinite(f)) throw FormatError(at, "non-finite feature value");
    v = f;
  }
  if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes after feature payload");
  return FeatureSequence(std::move(feats), static_cast<double>(fps), l);
}

void write_features(const std::string& path, const FeatureSequence& seq) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const auto bytes = encode_features(seq);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

FeatureSequence read_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_features(std::move(buf));
}

namespace {

const json& require(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw RecordError(line, std::string("missing required field '") + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, std::size_t line) {
  const json& v = require(j, key, line);
  if (!v.is_number()) throw RecordError(line, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  const json& v = require(j, key, line);
  if (!v.is_string()) throw RecordError(line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

template <class Fn>
void for_each_json_line(const std::string& path, Fn&& fn) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string text;
  std::size_t line = 0;
  while (std::getline(f, text)) {
    ++line;
    if (blank(text)) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw RecordError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw RecordError(line, "record must be a JSON object");
    fn(j, line);
  }
}

void write_lines(const std::string& path, const std::vector<json>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& r : rows) f << r.dump() << '\n';
  if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const std::string& path, std::vector<std::string>* warnings) {
  static const char* const kKnown[] = {"video_id", "feature_path", "duration_s",
                                       "query_tokens", "start_s", "end_s"};
  std::vector<ManifestRecord> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    for (const auto& [key, _] : j.items()) {
      if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
        const std::string msg = path + ":" + std::to_string(line) + ": ignoring unknown field '" + key + "'";
        if (warnings != nullptr) warnings->push_back(msg);
        else std::cerr << "warning: " << msg << '\n';
      }
    }
    ManifestRecord r;
    r.video_id = require_string(j, "video_id", line);
    r.feature_path = require_string(j, "feature_path", line);
    r.duration_s = require_number(j, "duration_s", line);
    const json& toks = require(j, "query_tokens", line);
    if (!toks.is_array() || toks.empty()) throw RecordError(line, "query_tokens must be a non-empty array");
    for (const auto& t : toks) {
      if (!t.is_number_integer()) throw RecordError(line, "query_tokens must hold integers");
      r.query_tokens.push_back(t.get<std::int32_t>());
    }
    r.start_s = require_number(j, "start_s", line);
    r.end_s = require_number(j, "end_s", line);
    if (!(r.start_s >= 0.0)) throw RecordError(line, "start_s must be >= 0");
    if (!(r.start_s < r.end_s)) throw RecordError(line, "start_s must be < end_s");
    if (!(r.duration_s > 0.0) || r.end_s > r.duration_s * (1.0 + 1e-9))
      throw RecordError(line, "end_s must lie within duration_s");
    out.push_back(std::move(r));
  });
  return out;
}

void write_manifest(const std::string& path, std::span<const ManifestRecord> records) {
  std::vector<json> rows;
  for (const auto& r : records)
    rows.push_back({{"video_id", r.video_id},
                    {"feature_path", r.feature_path},
                    {"duration_s", r.duration_s},
                    {"query_tokens", r.query_tokens},
                    {"start_s", r.start_s},
                    {"end_s", r.end_s}});
  write_lines(path, rows);
}

std::string write_dataset(const std::string& dir, const std::string& manifest_name,
                          std::span<const Example> examples) {
  fs::create_directories(fs::path(dir) / "features");
  std::vector<ManifestRecord> records;
  for (const auto& ex : examples) {
    const std::string rel = "features/" + ex.video_id + ".lgfe";
    write_features((fs::path(dir) / rel).string(), ex.features);
    records.push_back({ex.video_id, rel, ex.features.duration(), ex.annotation.query_tokens,
                       ex.annotation.start_s, ex.annotation.end_s});
  }
  const std::string manifest = (fs::path(dir) / manifest_name).string();
  write_manifest(manifest, records);
  return manifest;
}

std::vector<Example> load_dataset(const std::string& manifest_path) {
  const auto records = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    fs::path p(r.feature_path);
    if (p.is_relative()) p = base / p;
    FeatureSequence seq = read_features(p.string());
    if (std::abs(seq.duration() - r.duration_s) > 1.0 / seq.fps() + 1e-9)
      throw MismatchError("duration_s", "manifest says " + std::to_string(r.duration_s) +
                                            " s for '" + r.video_id + "', features span " +
                                            std::to_string(seq.duration()) + " s");
    const double end = std::min(r.end_s, seq.duration());
    MomentAnnotation ann = make_annotation(seq, r.query_tokens, r.start_s, end);
    out.push_back({r.video_id, std::move(seq), std::move(ann)});
  }
  return out;
}

void write_predictions(const std::string& path, std::span<const PredictionRecord> preds) {
  std::vector<json> rows;
  for (const auto& p : preds)
    rows.push_back({{"video_id", p.video_id},
                    {"pred_start_s", p.pred_start_s},
                    {"pred_end_s", p.pred_end_s},
                    {"tiou", p.tiou}});
  write_lines(path, rows);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::vector<PredictionRecord> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    PredictionRecord p;
    p.video_id = require_string(j, "video_id", line);
    p.pred_start_s = require_number(j, "pred_start_s", line);
    p.pred_end_s = require_number(j, "pred_end_s", line);
    if (j.contains("tiou")) p.tiou = require_number(j, "tiou", line);
    if (p.pred_end_s < p.pred_start_s) throw RecordError(line, "pred_end_s must be >= pred_start_s");
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace momentloc
