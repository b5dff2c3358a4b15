#pragma once

#include <stdexcept>
#include <string>

namespace coxrs {

/// Invalid argument outside an operation's documented domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mathematical domain violation (negative Lambert W argument, singular
/// spectral average, nonpositive k or rho).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative method failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// The requested point lies on or beyond a phase boundary of the RS theory
/// (maximum-likelihood regime with zeta >= 1).
class PhaseBoundaryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace coxrs
