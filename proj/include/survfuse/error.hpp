#pragma once

#include <stdexcept>
#include <string>

namespace survfuse {

// Base of every error raised by the library. The CLI maps subclasses to
// exit codes: input errors -> 2, evaluation degeneracy -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input errors.
class IOError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class EncodingError : public Error {
 public:
  using Error::Error;
};

// Numerical failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double violation)
      : NumericalError(what), violation_(violation) {}
  double violation() const { return violation_; }

 private:
  double violation_;
};

// Degenerate evaluation input (no comparable pairs, zero logrank variance).
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace survfuse
