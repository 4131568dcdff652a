#pragma once

#include <stdexcept>
#include <string>

namespace hjbscan {

/// Base class for numerical failures raised by the solvers.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An ODE right-hand side or integrated state became NaN/Inf.
class NonFiniteError : public SolverError {
 public:
  NonFiniteError(const std::string& what, double time, long component)
      : SolverError(what), time_(time), component_(component) {}

  double time() const noexcept { return time_; }
  long component() const noexcept { return component_; }

 private:
  double time_;
  long component_;
};

/// A linear solve whose matrix failed the condition-number guard.
class IllConditionedError : public SolverError {
 public:
  IllConditionedError(const std::string& what, double condition)
      : SolverError(what), condition_(condition) {}

  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Problem configuration could not be read. `line` is 1-based, 0 if unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace hjbscan
