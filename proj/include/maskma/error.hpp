#pragma once

#include <stdexcept>
#include <string>

namespace maskma {

// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid argument or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File read/write failures.
class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public IoError {
 public:
  using IoError::IoError;
};

class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace maskma
