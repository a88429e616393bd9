#pragma once

#include <stdexcept>
#include <string>

namespace sst {

enum class ErrorKind { Config, Numerical, Invariant };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// Tagged numerical failure: NonIntegrable, MaxDepthExceeded, ConvergenceFailure,
/// ChartInversionFailure, DegenerateSegment, InvalidGrid, ZeroDenominator.
class NumericalError : public Error {
 public:
  NumericalError(std::string tag, const std::string& what)
      : Error(ErrorKind::Numerical, tag + ": " + what), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

class InvariantViolation : public Error {
 public:
  explicit InvariantViolation(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

}  // namespace sst
