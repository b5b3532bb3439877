// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <stdexcept>
#include <string>

namespace rawmap {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kNumeric = 4,
};

/// Base of every error thrown by the library. Each subclass carries the exit
/// code the CLI reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

/// Bad argument value (out of range, empty list, unknown enum name).
class ParameterError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

/// Image or buffer has the wrong dimensions / channel count.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Missing files, malformed files, manifest mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// No pixels survived masking.
class EmptyMaskError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

/// Input outside the mathematical domain of an operation (zero-norm vectors).
class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Degenerate input: zero-power spectra, near-zero green channel, zero matrix.
class DegenerateError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Rank-deficient linear system.
class SingularError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace rawmap
