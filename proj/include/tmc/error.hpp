#pragma once

#include <stdexcept>
#include <string>

namespace tmc {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function (x <= 0, NaN, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Violated type invariant (alpha_k < 1, mismatched K, malformed opinion).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Two opinions whose normalizer 1 - C vanishes.
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  enum class Kind { kMissingFile, kRagged, kNonNumeric, kLabelRange, kFormat };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tmc
