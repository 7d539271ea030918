#pragma once

#include <stdexcept>
#include <string>

namespace bvr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, hyperparameter or shape contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes disagree.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Parameter outside its mathematical domain (e.g. non-positive Cholesky diagonal).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input data is missing, malformed or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss, gradient or update.
class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  enum class Kind { version_mismatch, corrupt, shape_mismatch, io };

  CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace bvr
