#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "coxrs/spectrum.hpp"

namespace coxrs {

enum class CovariateDist { kGaussian, kRademacher, kUniform, kStudentT };

struct CovariateSpec {
  CovariateDist dist = CovariateDist::kGaussian;
  double nu = 5.0;  // student-t degrees of freedom, > 2
};

/// Population correlation structure of the covariates.
namespace correlation {
struct Identity {};
struct Pairwise {
  double epsilon;  // A_{2m,2m+1} = epsilon (0-based), requires even p
};
struct UniformRankOne {
  double epsilon;  // A = (1 - eps/sqrt p) I + (eps/sqrt p) 1 1^T
};
}  // namespace correlation

using CorrelationModel =
    std::variant<correlation::Identity, correlation::Pairwise, correlation::UniformRankOne>;

struct CohortConfig {
  int p = 100;
  int N = 200;
  double S = 1.0;
  CovariateSpec covariates;
  CorrelationModel correlation = correlation::Identity{};
  double lambda0 = 1.0;  // constant baseline hazard
  std::uint64_t seed = 1;

  double zeta() const { return static_cast<double>(p) / N; }
  void validate() const;
};

struct Cohort {
  Eigen::MatrixXd Z;      // N x p covariates
  Eigen::VectorXd beta0;  // risk score = beta0 . z / sqrt(p)
  Eigen::VectorXd times;
  CohortConfig config;
  std::uint64_t replicate = 0;
  int ties_broken = 0;
};

/// Independent generator for the stream identified by `key`. Streams with
/// distinct keys are unrelated, so any subset of rows or replicates can be
/// regenerated in any order.
std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t purpose,
                             std::uint64_t index);

/// i.i.d. standard normal draws rescaled so that p^{-1} |beta0|^2 = S^2.
Eigen::VectorXd draw_associations(int p, double S, std::mt19937_64& rng);

/// Rows are independent, zero mean, with population covariance A of
/// `correlation` and unit diagonal. Row i uses stream (seed, replicate, 1, i).
Eigen::MatrixXd draw_covariates(int N, int p, const CorrelationModel& correlation,
                                const CovariateSpec& dist, std::uint64_t seed,
                                std::uint64_t replicate);

/// Inverse-transform sampling under Lambda0(t) = lambda0 t:
/// t_i = -log(U_i) exp(-r_i) / lambda0 with r_i = beta0 . z_i / sqrt(p).
/// Row i uses stream (seed, replicate, 2, i). Exact ties are separated by one ulp.
Eigen::VectorXd generate_times(const Eigen::VectorXd& beta0, const Eigen::MatrixXd& Z,
                               double lambda0, std::uint64_t seed, std::uint64_t replicate,
                               int* ties_broken = nullptr);

Cohort make_cohort(const CohortConfig& config, std::uint64_t replicate = 0);

/// Population matrix action u -> A u, in closed form.
Eigen::VectorXd apply_correlation(const CorrelationModel& model, const Eigen::VectorXd& u);

/// p -> infinity eigenvalue distribution of the correlation model.
Spectrum correlation_spectrum(const CorrelationModel& model);

CovariateSpec parse_covariate_dist(const std::string& text);
std::string to_string(const CovariateSpec& spec);
CorrelationModel parse_correlation(const std::string& text);
std::string to_string(const CorrelationModel& model);

/// Writes `<prefix>.csv` (time, z1..zp per subject) and `<prefix>.json`
/// (config, beta0, seed).
void export_cohort(const Cohort& cohort, const std::string& prefix);

}  // namespace coxrs
