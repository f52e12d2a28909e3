#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kdvb {

/// Bad user input: grid sizes, shapes, parameters out of range.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Base class for numerical failures (exit code 3 in the CLI).
class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class FactorizationFailure : public SolverError {
public:
  using SolverError::SolverError;
};

/// Fixed-point or iterative solve that did not reach its tolerance.
class NoConvergence : public SolverError {
public:
  NoConvergence(const std::string &what, std::vector<double> history)
      : SolverError(what), history_(std::move(history)) {}

  const std::vector<double> &history() const noexcept { return history_; }
  double final_residual() const noexcept {
    return history_.empty() ? 0.0 : history_.back();
  }

private:
  std::vector<double> history_;
};

/// Profile construction produced something that fails its own checks.
class ConstructionFailed : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace kdvb
