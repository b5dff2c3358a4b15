#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coxrs/special.hpp"
#include "coxrs/spectrum.hpp"

namespace coxrs {

/// Input of the replica-symmetric theory. The prior is p(beta) ~ exp(-p eta beta^2).
struct ModelParams {
  double zeta = 0.5;  // p / N
  double eta = 0.0;
  double S = 1.0;     // S^2 = lim p^{-1} |beta0|^2
  Spectrum spectrum = make_spectrum(spectrum_model::Identity{});

  /// Throws ParameterError on invalid ranges and PhaseBoundaryError for the
  /// unregularized regime at zeta >= 1.
  void validate() const;
  double S_tilde() const;  // S <a>^{1/2}
};

/// Solution of the seven RS saddle-point equations plus derived quantities.
struct OrderParams {
  double u_tilde = 0.0;
  double v = 0.0;
  double w = 0.0;
  double f_tilde = 0.0;
  double g_tilde = 0.0;
  double q = 0.0;    // k u^2 exp(u^2)
  double rho = 1.0;

  double sigma = 0.0;
  double k = 0.0;
  double kappa = 0.0;
  double S_tilde = 0.0;
  double E = 0.0;

  double residual_norm = 0.0;
  bool converged = false;
  bool asymptotic = false;  // small-zeta expansion, not a solved point

  double u2() const noexcept { return u_tilde * u_tilde; }
};

struct QuadraturePair {
  QuadratureRule gaussian;
  QuadratureRule exponential;

  static QuadraturePair with_orders(int hermite_order, int exponential_order);
  static const QuadraturePair& defaults();
};

struct SolverOptions {
  double tol = 1e-10;        // absolute and relative residual infinity norm
  int max_newton = 200;
  double fd_step = 1e-6;
  double min_damping = 1e-4;
  int fallback_sweeps = 25;  // Gauss-Seidel sweeps when Newton stalls
  double zeta_start = 0.01;  // continuation origin
  double max_zeta_ratio = 1.25;
  int hermite_order = kDefaultHermiteOrder;
  int exponential_order = kDefaultExponentialOrder;

  QuadraturePair quadrature() const;
};

/// sigma^2 = (w - rho S~)^2 + v^2
double rs_sigma(double w, double v, double rho, double S_tilde);

/// LHS - RHS of the seven equations, in the order
/// (f, g, w, u^2 spectral, v, u^2 hazard, rho).
std::array<double, 7> rs_residuals(const OrderParams& op, const ModelParams& mp,
                                   const QuadraturePair& quad = QuadraturePair::defaults());

/// Recomputes sigma, k, kappa, S_tilde and E from the primary fields.
void fill_derived(OrderParams& op, const ModelParams& mp);

/// Leading-order small-zeta solution (u^2 = v^2 = zeta, w = S~, g = 1/zeta,
/// f = -1/zeta, rho = k = 1). Flagged as asymptotic.
OrderParams small_zeta_init(const ModelParams& mp);

/// Damped Newton with finite-difference Jacobian; without `init`, continues
/// in zeta from the small-zeta expansion. Throws ConvergenceError on failure.
OrderParams rs_solve(const ModelParams& mp, const std::optional<OrderParams>& init = std::nullopt,
                     const SolverOptions& opts = {});

struct SweepPoint {
  double zeta = 0.0;
  std::optional<OrderParams> solution;
  std::string error;
};

/// One solution per grid point (strictly increasing). With `chain`, each
/// point is warm-started from its predecessor; otherwise the points are
/// independent and solved concurrently.
std::vector<SweepPoint> rs_sweep(const ModelParams& mp_template, std::span<const double> zeta_grid,
                                 const SolverOptions& opts = {}, bool chain = true);

/// eta -> 0 reduction: solves (v, rho, u, q) with w = rho S~, g = 1/u^2,
/// f = -v^2/u^4. Requires 0 < zeta < 1.
OrderParams ml_limit_solve(double zeta, double S, const Spectrum& spectrum,
                           const SolverOptions& opts = {});

struct LargeZetaLimit {
  double Q = 0.0;    // lim zeta g u^2
  double q = 0.0;
  double rho = 0.0;
  double u2 = 0.0;   // <a> / 2 eta
};

LargeZetaLimit large_zeta_solve(double eta, double S, const Spectrum& spectrum,
                                const SolverOptions& opts = {});

/// Asymptotic overfitting measure E(S). Throws DomainError for k <= 0 or rho <= 0.
double overfit_measure(const OrderParams& op, const ModelParams& mp);

struct Calibration {
  double zeta = 0.0;
  double eta_star = 0.0;
  double lambda = 0.0;  // equivalent per-sample ridge penalty of glmnet-style fitters
  OrderParams solution;
};

/// eta giving kappa = 1. Requires zeta >= 0.05.
Calibration calibrate_eta(double zeta, double S, const Spectrum& spectrum, double tol = 1e-6,
                          const SolverOptions& opts = {});

/// lambda = 2 eta zeta: the penalty lambda/2 |theta|^2 in natural covariate
/// units equals eta zeta |theta|^2.
inline double penalty_lambda(double eta, double zeta) { return 2.0 * eta * zeta; }

/// Checks lambda = 2 eta zeta against reference (zeta, eta, lambda)
/// calibration rows; throws std::logic_error on mismatch.
void verify_penalty_table();

std::string order_params_csv_header();
std::string order_params_csv_row(const ModelParams& mp, const OrderParams& op);

}  // namespace coxrs
