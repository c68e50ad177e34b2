// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rails {

/// Base for every user-facing failure. `code()` is the machine-readable
/// identifier the CLI reports (E_INVALID_INPUT, E_FORMAT, ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& message) : Error("E_INVALID_INPUT", message) {}
};

class MissingInput : public Error {
 public:
  explicit MissingInput(const std::string& message) : Error("E_MISSING_INPUT", message) {}
};

/// Aggregates every violation found while validating a configuration.
class InvalidConfig : public Error {
 public:
  explicit InvalidConfig(std::vector<std::string> violations)
      : Error("E_INVALID_CONFIG", join(violations)), violations_(std::move(violations)) {}
  explicit InvalidConfig(const std::string& violation)
      : InvalidConfig(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid config: ";
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i > 0) out += "; ";
      out += items[i];
    }
    return out;
  }
  std::vector<std::string> violations_;
};

/// Malformed file. Carries the byte offset (or line number for text
/// formats) at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : Error("E_FORMAT", message + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A broken internal invariant: a bug, never a user error.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rails
