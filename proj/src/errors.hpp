// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace momentloc {

/// Precondition violated by a caller-supplied value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A forward or backward pass produced NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary input. Carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : std::runtime_error("at byte offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Malformed text record. Carries the 1-based line number.
class RecordError : public std::runtime_error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint or configuration incompatibility; names the differing field.
class MismatchError : public std::runtime_error {
 public:
  MismatchError(const std::string& field, const std::string& what)
      : std::runtime_error("mismatch in '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Bad command-line or configuration usage (unknown mode, bad key).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace momentloc
