#pragma once

#include <stdexcept>
#include <string>

namespace slsnet {

/// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter, layer setting or config file content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf detected in a value or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Values outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse (backward on a non-scalar, empty dataset, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace slsnet
