#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coxrs/survival_sim.hpp"

namespace coxrs {

/// Right-continuous step function with Lambda(t) = 0 before the first jump.
struct StepFunction {
  std::vector<double> times;   // strictly increasing jump locations
  std::vector<double> values;  // cumulative value from each jump onward

  double operator()(double t) const;
};

struct FitResult {
  Eigen::VectorXd b_hat;  // risk score = b_hat . z / sqrt(p)
  double objective = 0.0;
  double grad_norm = 0.0;  // infinity norm
  int iterations = 0;
  std::vector<double> objective_history;  // objective at each accepted iterate
  StepFunction Lambda_hat;
};

struct FitOptions {
  double grad_tol = 1e-9;
  int max_iter = 100;
  int max_halvings = 60;
  std::optional<Eigen::VectorXd> start;
};

/// Negative log partial likelihood per subject plus `penalty * |x|^2`, for a
/// generic design matrix X. Breslow convention for tied times.
class PenalizedCoxProblem {
 public:
  PenalizedCoxProblem(const Eigen::MatrixXd& X, const Eigen::VectorXd& times, double penalty);

  int dim() const { return static_cast<int>(X_.cols()); }
  int size() const { return static_cast<int>(X_.rows()); }
  double penalty() const { return penalty_; }

  double value(const Eigen::VectorXd& x) const;
  /// Returns the value; fills gradient and, if non-null, the Hessian.
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd* hess) const;

  /// Breslow cumulative baseline hazard at coefficients x.
  StepFunction baseline(const Eigen::VectorXd& x) const;

 private:
  struct Scan {
    Eigen::VectorXd r;
    std::vector<double> log_s;  // per tie group
  };
  Scan scan(const Eigen::VectorXd& x) const;

  Eigen::MatrixXd X_;              // rows sorted by time
  std::vector<double> group_time_;
  std::vector<int> group_start_;   // first row of each tie group, plus sentinel N
  double penalty_;
};

struct Objective {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// F(b) = -(1/N) sum_i [r_i - log sum_{t_j >= t_i} exp(r_j)] + (eta / N) |b|^2
/// with r_i = b . z_i / sqrt(p). In natural units theta = b / sqrt(p) the
/// penalty reads eta zeta |theta|^2.
Objective penalized_objective(const Eigen::VectorXd& b, const Cohort& cohort, double eta);

/// Newton iterations with Cholesky solves and step halving on an arbitrary
/// problem. Throws DomainError on an indefinite Hessian and ConvergenceError
/// when the iteration cap is hit.
FitResult fit_penalized_cox(const PenalizedCoxProblem& problem, const FitOptions& opts = {});

/// MAP estimate under the prior exp(-p eta beta^2). eta = 0 gives maximum
/// partial likelihood and requires p < N.
FitResult fit_ridge_cox(const Cohort& cohort, double eta, const FitOptions& opts = {});

StepFunction breslow_baseline(const Eigen::VectorXd& b_hat, const Cohort& cohort);

/// Writes `<prefix>.csv` (index, b_hat) and `<prefix>.json` (metadata, Lambda_hat).
void export_fit(const FitResult& fit, const std::string& prefix);

}  // namespace coxrs
