// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <filesystem>
#include <string>

#include "core.hpp"
#include "rng.hpp"

namespace momentloc::test {

inline FeatureSequence random_sequence(std::int64_t n, std::int64_t d, std::uint64_t seed, double fps = 25.0,
                                       std::int64_t frames_per_feature = 16) {
  Rng rng(seed);
  Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  for (double& v : m.values()) v = rng.normal();
  return FeatureSequence(std::move(m), fps, n * frames_per_feature);
}

inline FeatureSequence from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return FeatureSequence(std::move(m), 25.0, static_cast<std::int64_t>(rows.size()) * 16);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("momentloc_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace momentloc::test
