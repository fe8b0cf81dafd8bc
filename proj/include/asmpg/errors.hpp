#pragma once

#include <stdexcept>
#include <string>

namespace asmpg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument domain (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Index outside the alphabet or trajectory range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Dimension or length mismatch between policy, trajectory and spec.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Enumeration would exceed the configured leaf budget (CLI exit code 4).
class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what, double required = 0.0, double budget = 0.0)
      : Error(what), required_(required), budget_(budget) {}
  double required() const { return required_; }
  double budget() const { return budget_; }

 private:
  double required_;
  double budget_;
};

/// Operation not available for this parametrization.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a violated numeric invariant (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Conditional expectation requested on a zero-probability prefix.
class UndefinedConditionalError : public Error {
 public:
  using Error::Error;
};

}  // namespace asmpg
