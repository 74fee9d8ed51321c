// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace essencekit {

enum class ErrorCode {
  ZeroVector,
  DimMismatch,
  ShapeMismatch,
  SpaceMismatch,
  ZeroEmbedding,
  EmptyBatch,
  BatchTooSmall,
  MissingInverter,
  NonTrainableInverter,
  SingularCovariance,
  InsufficientSamples,
  MissingPair,
  DuplicatePair,
  InvalidConfig,
  InvalidValue,
  Io,
  Format,
  BackendUnavailable,
  ProfileMismatch,
  NumericFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace essencekit
