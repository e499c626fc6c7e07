#pragma once

#include <stdexcept>
#include <string>

namespace attnlab {

/// Base of every error the library throws. `exit_code()` is the process
/// status the CLI reports for it.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Bad configuration, malformed fixture, unknown key, shape mismatch at an API boundary.
class ConfigError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

/// Divergence, SVD failure, size caps exceeded.
class NumericalError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A theorem hypothesis or dimension precondition does not hold.
class HypothesisError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Argument outside an operation's mathematical domain (e.g. reciprocal of zero).
class DomainError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Internal invariant broken (e.g. state built for the wrong kernel).
class InternalError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

}  // namespace attnlab
