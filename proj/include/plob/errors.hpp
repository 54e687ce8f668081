#pragma once

#include <stdexcept>
#include <string>

namespace plob {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// A time step produced a state a smaller step could still repair.
/// The driver reacts by halving dt and retrying.
class StepRejected : public std::runtime_error {
 public:
  explicit StepRejected(const std::string& what) : std::runtime_error(what) {}
};

/// Velocity divergence left the admissible interval (-1/b, 1/b).
class BarrierError : public StepRejected {
 public:
  explicit BarrierError(const std::string& what) : StepRejected(what) {}
};

/// An iterative solve exhausted its iteration budget.
class NonconvergenceError : public std::runtime_error {
 public:
  explicit NonconvergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Two fields or states live on different grids.
class GridMismatchError : public std::runtime_error {
 public:
  explicit GridMismatchError(const std::string& what)
      : std::runtime_error(what) {}
};

/// A field is degenerate for the requested diagnostic (e.g. zero strain).
class DegenerateFieldError : public std::runtime_error {
 public:
  explicit DegenerateFieldError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed snapshot file.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace plob
