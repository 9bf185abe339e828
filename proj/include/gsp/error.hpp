#pragma once

#include <stdexcept>
#include <string>

namespace gsp {

// Base for every error thrown by the library. Callers that only want to
// distinguish "bad input" from "numerics went wrong" can catch the two
// intermediate classes below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised when the transport Jacobian is singular (mu = 1 or rho on the
// boundary of its box), or a factorization hits a non-positive pivot.
class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gsp
