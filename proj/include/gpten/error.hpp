#pragma once

#include <stdexcept>
#include <string>

namespace gpten {

/// Base of every error the library throws. `exit_code()` maps the error
/// family onto the CLI's process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid option, precondition on parameters, or mismatched artifacts.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class EmptyCorpus : public DataError {
 public:
  using DataError::DataError;
};

/// Every slice of a tensor is zero, so there is nothing to decompose.
class DegenerateTensor : public DataError {
 public:
  using DataError::DataError;
};

class FingerprintMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace gpten
