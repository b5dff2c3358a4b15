#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coxrs/cox_fit.hpp"
#include "coxrs/rs_solver.hpp"
#include "coxrs/survival_sim.hpp"

namespace coxrs {

struct CloudStats {
  double kappa = 0.0;
  double v = 0.0;
  double S_tilde = 0.0;  // (p^{-1} beta0 . A beta0)^{1/2}

  double w() const { return kappa * S_tilde; }
};

/// kappa = beta0.A b / beta0.A beta0 and v^2 = max(0, p^{-1} b.A b - kappa^2 S~^2).
CloudStats estimate_cloud_stats(const Eigen::VectorXd& beta0, const Eigen::VectorXd& b_hat,
                                const CorrelationModel& model);

struct HazardDistortion {
  double k = 0.0;
  double rho = 0.0;
};

inline constexpr double kHazardTrimFraction = 0.05;
inline constexpr int kHazardMinPoints = 10;

/// Least squares of log Lambda_hat on log(lambda0 t) over the jumps of
/// Lambda_hat, dropping the first `trim` fraction. Throws ParameterError with
/// fewer than 10 usable points.
HazardDistortion estimate_hazard_distortion(const StepFunction& Lambda_hat, double lambda0,
                                            double trim = kHazardTrimFraction);

struct ReplicateRecord {
  std::uint64_t replicate = 0;
  bool ok = false;
  std::string error;
  double kappa = 0.0;
  double v = 0.0;
  double w = 0.0;
  double k_hat = 0.0;    // NaN if the hazard regression was not possible
  double rho_hat = 0.0;
  int iterations = 0;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  int count = 0;
};

/// Ignores NaN entries.
MeanSd mean_sd(std::span<const double> values);

struct ExperimentSummary {
  CohortConfig config;
  double eta = 0.0;
  int replicates = 0;
  int failed = 0;
  MeanSd kappa, v, w, rho_hat, k_hat;
  std::optional<OrderParams> theory;
  std::string theory_error;
  std::vector<ReplicateRecord> records;  // indexed by replicate id
};

struct ExperimentOptions {
  int jobs = 1;
  bool with_theory = true;
  SolverOptions solver;
  FitOptions fit;
};

/// Replicate r uses cohort streams keyed by (config.seed, r). The result does
/// not depend on `jobs`.
ExperimentSummary run_experiment(const CohortConfig& config, double eta, int replicates,
                                 const ExperimentOptions& opts = {});

/// Aggregates successful records in replicate-id order.
void aggregate(ExperimentSummary& summary);

std::string experiment_csv_header();
std::string experiment_csv_row(const ExperimentSummary& s);

struct SelfAveragingRow {
  int p = 0;
  double mean = 0.0;
  double sd = 0.0;
  double standard_error = 0.0;  // sd / sqrt(replicates)
};

struct SelfAveragingResult {
  std::vector<SelfAveragingRow> rows;
  double slope = 0.0;  // log sd against log p
  double target = 0.0; // S^2 <a>
};

/// Distribution of p^{-1} beta0.A beta0 over realizations of beta0 with
/// i.i.d. N(0, S^2) components.
SelfAveragingResult self_averaging_study(std::span<const int> p_grid,
                                         const CorrelationModel& correlation, double S,
                                         int replicates, std::uint64_t seed = 1);

}  // namespace coxrs
