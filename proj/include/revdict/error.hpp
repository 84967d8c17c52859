#pragma once

#include <stdexcept>
#include <string>

namespace revdict {

// Process exit codes shared by every CLI command.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumeric = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

// Operand shapes that do not agree with an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation invoked in the wrong state (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files and records.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// NaN/Inf in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

}  // namespace revdict
