// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace genegan {

// Configuration / usage problems (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset / image file problems (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint problems (CLI exit code 4), with a distinct code per failure mode.
class CheckpointError : public std::runtime_error {
 public:
  enum class Code { kBadMagic, kBadVersion, kBadCrc, kTruncated, kBadFormat };

  CheckpointError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

}  // namespace genegan
