#include "coxrs/rs_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "coxrs/errors.hpp"

namespace coxrs {

namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Expectations over x ~ N(0,1) and L ~ Exp(1) of functions of
// W = W(q exp(sigma x) L^rho).
struct HazardIntegrals {
  double w = 0.0;          // E[W]
  double w_ratio = 0.0;    // E[W / (1 + W)]
  double w_sq_dev = 0.0;   // E[(W - u^2)^2]
  double w_log = 0.0;      // E[W log L]
};

class HazardGrid {
 public:
  explicit HazardGrid(const QuadraturePair& quad) {
    const auto& g = quad.gaussian;
    const auto& e = quad.exponential;
    x_ = g.nodes;
    wx_ = g.weights;
    log_l_.reserve(e.size());
    for (double l : e.nodes) log_l_.push_back(std::log(l));
    wl_ = e.weights;
  }

  HazardIntegrals integrate(double log_q, double sigma, double rho, double u2) const {
    HazardIntegrals out;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double base = log_q + sigma * x_[i];
      double s_w = 0.0, s_ratio = 0.0, s_sq = 0.0, s_log = 0.0;
      for (std::size_t j = 0; j < log_l_.size(); ++j) {
        const double wv = lambert_w0_exp(base + rho * log_l_[j]);
        const double m = wl_[j];
        s_w += m * wv;
        s_ratio += m * wv / (1.0 + wv);
        s_sq += m * (wv - u2) * (wv - u2);
        s_log += m * wv * log_l_[j];
      }
      out.w += wx_[i] * s_w;
      out.w_ratio += wx_[i] * s_ratio;
      out.w_sq_dev += wx_[i] * s_sq;
      out.w_log += wx_[i] * s_log;
    }
    return out;
  }

 private:
  std::vector<double> x_, wx_, log_l_, wl_;
};

struct Moments {
  double mean, m11, m21, m22, m32;
};

Moments spectral_moments(const Spectrum& s, double eta, double g) {
  return {s.mean(), spectral_moment(s, 1, 1, eta, g), spectral_moment(s, 2, 1, eta, g),
          spectral_moment(s, 2, 2, eta, g), spectral_moment(s, 3, 2, eta, g)};
}

// Residuals (LHS - RHS) and their magnitudes |LHS| + |RHS| for the
// relative convergence test.
void rs_residuals_scaled(const OrderParams& op, const ModelParams& mp, const HazardGrid& grid,
                         double* r, double* scale) {
  const double zeta = mp.zeta, eta = mp.eta, S = mp.S;
  const double u2 = op.u2();
  const double g = op.g_tilde, f = op.f_tilde, w = op.w, v = op.v, rho = op.rho;
  const Moments mo = spectral_moments(mp.spectrum, eta, g);
  const double sa = std::sqrt(mo.mean);
  const double st = S * sa;
  const double sigma = rs_sigma(w, v, rho, st);
  const HazardIntegrals h = grid.integrate(std::log(op.q), sigma, rho, u2);

  auto put = [&](int i, double lhs, double rhs, double extra = 0.0) {
    r[i] = lhs - rhs;
    scale[i] = std::abs(lhs) + std::abs(rhs) + extra;
  };
  put(0, zeta * f * u2 * u2, -h.w_sq_dev);
  put(1, zeta * g * u2, h.w_ratio);
  put(2, w, g * rho * S * mo.m21 / sa);
  put(3, u2, mo.m11);
  const double v_bias = w * w * (mo.mean * mo.m32 / (mo.m21 * mo.m21) - 1.0);
  put(4, v * v, v_bias - f * mo.m22, std::abs(v_bias) + std::abs(f * mo.m22));
  put(5, u2, h.w);
  const double coupling = zeta * g * u2 * st * (w - rho * st);
  put(6, u2 / rho, h.w_log - coupling + u2 * kEulerGamma,
      std::abs(h.w_log) + std::abs(coupling) + u2 * kEulerGamma);
}

// Unknowns: (log u^2, v, w, log(-f), log g, log q, log rho).
VectorXd to_vector(const OrderParams& op) {
  VectorXd y(7);
  y << std::log(op.u2()), op.v, op.w, std::log(-op.f_tilde), std::log(op.g_tilde), std::log(op.q),
      std::log(op.rho);
  return y;
}

OrderParams from_vector(const VectorXd& y) {
  OrderParams op;
  op.u_tilde = std::exp(0.5 * y[0]);
  op.v = y[1];
  op.w = y[2];
  op.f_tilde = -std::exp(y[3]);
  op.g_tilde = std::exp(y[4]);
  op.q = std::exp(y[5]);
  op.rho = std::exp(y[6]);
  return op;
}

using System = std::function<void(const VectorXd&, VectorXd&, VectorXd&)>;

struct NewtonOutcome {
  VectorXd y;
  double raw_norm = kInf;
  bool converged = false;
};

bool all_finite(const VectorXd& v) { return v.allFinite(); }

// Evaluates F, mapping exceptions and non-finite values to failure.
bool evaluate(const System& f, const VectorXd& y, VectorXd& r, VectorXd& s) {
  if (!all_finite(y)) return false;
  try {
    f(y, r, s);
  } catch (const std::exception&) {
    return false;
  }
  return all_finite(r) && all_finite(s);
}

double relative_inf(const VectorXd& r, const VectorXd& s) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    m = std::max(m, std::abs(r[i]) / std::max(s[i], std::numeric_limits<double>::min()));
  return m;
}

double merit(const VectorXd& r, const VectorXd& s) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double t = r[i] / std::max(s[i], std::numeric_limits<double>::min());
    m += t * t;
  }
  return m;
}

// Damped Newton with forward-difference Jacobian. When the line search
// stalls, `rescue` (if given) may propose a new iterate.
NewtonOutcome newton_solve(const System& f, VectorXd y, const SolverOptions& opts,
                           const std::function<bool(VectorXd&)>& rescue = {}) {
  const Eigen::Index n = y.size();
  VectorXd r(n), s(n), r_try(n), s_try(n);
  NewtonOutcome out;
  if (!evaluate(f, y, r, s)) return out;
  int rescues = 0;

  for (int it = 0; it < opts.max_newton; ++it) {
    const double raw = r.lpNorm<Eigen::Infinity>();
    if (raw < opts.tol && relative_inf(r, s) < opts.tol) {
      out.y = y;
      out.raw_norm = raw;
      out.converged = true;
      return out;
    }

    Eigen::MatrixXd jac(n, n);
    bool jac_ok = true;
    for (Eigen::Index k = 0; k < n && jac_ok; ++k) {
      VectorXd yk = y;
      const double h = opts.fd_step * std::max(1.0, std::abs(y[k]));
      yk[k] += h;
      if (!evaluate(f, yk, r_try, s_try)) {
        yk[k] = y[k] - h;
        if (!evaluate(f, yk, r_try, s_try)) jac_ok = false;
        jac.col(k) = (r - r_try) / h;
      } else {
        jac.col(k) = (r_try - r) / h;
      }
    }

    bool accepted = false;
    if (jac_ok) {
      // Row equilibration leaves the Newton step unchanged but helps QR.
      const VectorXd dinv = s.cwiseMax(std::numeric_limits<double>::min()).cwiseInverse();
      const Eigen::MatrixXd jd = dinv.asDiagonal() * jac;
      const VectorXd step = jd.colPivHouseholderQr().solve(-(dinv.asDiagonal() * r));
      if (all_finite(step)) {
        const double m0 = merit(r, s);
        for (double lam = 1.0; lam >= opts.min_damping; lam *= 0.5) {
          const VectorXd y_try = y + lam * step;
          if (evaluate(f, y_try, r_try, s_try) && merit(r_try, s_try) < m0) {
            y = y_try;
            r = r_try;
            s = s_try;
            accepted = true;
            break;
          }
        }
      }
    }
    if (!accepted) {
      if (rescue && rescues < 3) {
        ++rescues;
        VectorXd y_new = y;
        if (rescue(y_new) && evaluate(f, y_new, r_try, s_try)) {
          y = y_new;
          r = r_try;
          s = s_try;
          continue;
        }
      }
      break;
    }
  }
  out.y = y;
  out.raw_norm = r.lpNorm<Eigen::Infinity>();
  out.converged = out.raw_norm < opts.tol && relative_inf(r, s) < opts.tol;
  return out;
}

// Root of E[W(q e^{sigma x} L^rho)] = target in log q; the map is increasing.
double solve_log_q(const HazardGrid& grid, double target, double sigma, double rho,
                   double guess) {
  auto f = [&](double lq) { return grid.integrate(lq, sigma, rho, 0.0).w - target; };
  double a = guess, b = guess;
  double fa = f(a), fb = fa;
  double step = 1.0;
  for (int i = 0; i < 80 && fa * fb > 0.0; ++i) {
    if (fa > 0.0) {
      b = a;
      fb = fa;
      a -= step;
      fa = f(a);
    } else {
      a = b;
      fa = fb;
      b += step;
      fb = f(b);
    }
    step *= 1.6;
  }
  if (fa * fb > 0.0) throw ConvergenceError("could not bracket q", std::abs(fa));
  boost::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (lo + hi);
}

// One Gauss-Seidel pass over the equations in dependency order 4,3,6,2,1,5,7.
bool gauss_seidel_sweep(OrderParams& op, const ModelParams& mp, const HazardGrid& grid) {
  try {
    const double st = mp.S_tilde();
    Moments mo = spectral_moments(mp.spectrum, mp.eta, op.g_tilde);
    double u2 = mo.m11;
    op.u_tilde = std::sqrt(u2);
    op.w = op.g_tilde * op.rho * mp.S * mo.m21 / std::sqrt(mo.mean);
    double sigma = rs_sigma(op.w, op.v, op.rho, st);
    op.q = std::exp(solve_log_q(grid, u2, sigma, op.rho, std::log(op.q)));
    HazardIntegrals h = grid.integrate(std::log(op.q), sigma, op.rho, u2);
    op.g_tilde = h.w_ratio / (mp.zeta * u2);
    op.f_tilde = -h.w_sq_dev / (mp.zeta * u2 * u2);
    mo = spectral_moments(mp.spectrum, mp.eta, op.g_tilde);
    const double v2 = op.w * op.w * (mo.mean * mo.m32 / (mo.m21 * mo.m21) - 1.0) -
                      op.f_tilde * mo.m22;
    op.v = std::sqrt(std::max(0.0, v2));
    const double denom =
        h.w_log - mp.zeta * op.g_tilde * u2 * st * (op.w - op.rho * st) + u2 * kEulerGamma;
    if (denom > 0.0) op.rho = u2 / denom;
    return std::isfinite(op.q) && op.q > 0.0 && op.g_tilde > 0.0 && op.f_tilde < 0.0;
  } catch (const std::exception&) {
    return false;
  }
}

std::optional<OrderParams> solve_at(const ModelParams& mp, const OrderParams& start,
                                    const HazardGrid& grid, const SolverOptions& opts,
                                    double* last_norm = nullptr) {
  const System f = [&](const VectorXd& y, VectorXd& r, VectorXd& s) {
    const OrderParams op = from_vector(y);
    r.resize(7);
    s.resize(7);
    rs_residuals_scaled(op, mp, grid, r.data(), s.data());
  };
  const auto rescue = [&](VectorXd& y) {
    OrderParams op = from_vector(y);
    for (int i = 0; i < opts.fallback_sweeps; ++i)
      if (!gauss_seidel_sweep(op, mp, grid)) return false;
    y = to_vector(op);
    return true;
  };
  OrderParams s0 = start;
  if (!(s0.f_tilde < 0.0) || !(s0.g_tilde > 0.0) || !(s0.q > 0.0) || !(s0.rho > 0.0) ||
      !(s0.u_tilde > 0.0))
    return std::nullopt;
  const NewtonOutcome res = newton_solve(f, to_vector(s0), opts, rescue);
  if (last_norm) *last_norm = res.raw_norm;
  if (!res.converged) return std::nullopt;
  OrderParams op = from_vector(res.y);
  op.v = std::abs(op.v);
  op.residual_norm = res.raw_norm;
  op.converged = true;
  return op;
}

// Geometric continuation in zeta from `z_start` to `z_target`; `step`
// solves at a new zeta from the previous solution.
template <class State, class Step>
State continue_in_zeta(double z_start, double z_target, State state, double max_ratio,
                       Step&& step) {
  double z = z_start;
  double ratio = max_ratio;
  double last_norm = kInf;
  while (z < z_target) {
    const double z_next = std::min(z * ratio, z_target);
    if (auto next = step(z_next, state, &last_norm)) {
      state = *next;
      z = z_next;
      ratio = std::min(max_ratio, ratio * ratio);
    } else {
      ratio = std::sqrt(ratio);
      if (ratio < 1.0 + 1e-4)
        throw ConvergenceError("continuation stalled at zeta = " + std::to_string(z) +
                                   " on the way to " + std::to_string(z_target),
                               last_norm);
    }
  }
  return state;
}

std::string fmt_num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

void ModelParams::validate() const {
  if (!(zeta > 0.0) || !std::isfinite(zeta)) throw ParameterError("zeta must be positive");
  if (!(S > 0.0) || !std::isfinite(S)) throw ParameterError("S must be positive");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("eta must be nonnegative");
  if (eta == 0.0 && zeta >= 1.0)
    throw PhaseBoundaryError("unregularized (eta = 0) theory has a phase transition at zeta = 1");
}

double ModelParams::S_tilde() const { return S * std::sqrt(spectrum.mean()); }

QuadraturePair QuadraturePair::with_orders(int hermite_order, int exponential_order) {
  return {gauss_hermite(hermite_order), exponential_rule(exponential_order)};
}

const QuadraturePair& QuadraturePair::defaults() {
  static const QuadraturePair q = with_orders(kDefaultHermiteOrder, kDefaultExponentialOrder);
  return q;
}

QuadraturePair SolverOptions::quadrature() const {
  if (hermite_order == kDefaultHermiteOrder && exponential_order == kDefaultExponentialOrder)
    return QuadraturePair::defaults();
  return QuadraturePair::with_orders(hermite_order, exponential_order);
}

double rs_sigma(double w, double v, double rho, double S_tilde) {
  const double d = w - rho * S_tilde;
  return std::sqrt(d * d + v * v);
}

std::array<double, 7> rs_residuals(const OrderParams& op, const ModelParams& mp,
                                   const QuadraturePair& quad) {
  const HazardGrid grid(quad);
  std::array<double, 7> r{}, s{};
  rs_residuals_scaled(op, mp, grid, r.data(), s.data());
  return r;
}

void fill_derived(OrderParams& op, const ModelParams& mp) {
  op.S_tilde = mp.S_tilde();
  op.sigma = rs_sigma(op.w, op.v, op.rho, op.S_tilde);
  op.k = op.q * std::exp(-op.u2()) / op.u2();
  op.kappa = op.w / op.S_tilde;
  op.E = overfit_measure(op, mp);
}

OrderParams small_zeta_init(const ModelParams& mp) {
  OrderParams op;
  const double z = mp.zeta;
  op.u_tilde = std::sqrt(z);
  op.v = std::sqrt(z);
  op.w = mp.S_tilde();
  op.g_tilde = 1.0 / z;
  op.f_tilde = -1.0 / z;
  op.rho = 1.0;
  op.q = z * std::exp(z);
  op.asymptotic = true;
  fill_derived(op, mp);
  return op;
}

OrderParams rs_solve(const ModelParams& mp, const std::optional<OrderParams>& init,
                     const SolverOptions& opts) {
  mp.validate();
  const QuadraturePair quad = opts.quadrature();
  const HazardGrid grid(quad);

  std::optional<OrderParams> sol;
  double last_norm = kInf;
  if (init) sol = solve_at(mp, *init, grid, opts, &last_norm);

  if (!sol) {
    const double z0 = std::min(mp.zeta, opts.zeta_start);
    ModelParams m0 = mp;
    m0.zeta = z0;
    auto first = solve_at(m0, small_zeta_init(m0), grid, opts, &last_norm);
    if (!first)
      throw ConvergenceError("rs_solve: no solution near the small-zeta expansion at zeta = " +
                                 std::to_string(z0),
                             last_norm);
    sol = continue_in_zeta(z0, mp.zeta, *first, opts.max_zeta_ratio,
                           [&](double z, const OrderParams& prev, double* norm) {
                             ModelParams m = mp;
                             m.zeta = z;
                             return solve_at(m, prev, grid, opts, norm);
                           });
  }

  OrderParams op = *sol;
  if (!(op.g_tilde > 0.0) || !std::isfinite(op.v) || !std::isfinite(op.w))
    throw PhaseBoundaryError("rs_solve: solution left the admissible region");
  fill_derived(op, mp);
  return op;
}

std::vector<SweepPoint> rs_sweep(const ModelParams& mp_template, std::span<const double> zeta_grid,
                                 const SolverOptions& opts, bool chain) {
  for (std::size_t i = 0; i < zeta_grid.size(); ++i) {
    if (!(zeta_grid[i] > 0.0)) throw ParameterError("rs_sweep: grid values must be positive");
    if (i > 0 && !(zeta_grid[i] > zeta_grid[i - 1]))
      throw ParameterError("rs_sweep: grid must be strictly increasing");
  }

  auto solve_point = [&](double z, const std::optional<OrderParams>& init) {
    SweepPoint pt;
    pt.zeta = z;
    ModelParams m = mp_template;
    m.zeta = z;
    try {
      pt.solution = rs_solve(m, init, opts);
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    return pt;
  };

  std::vector<SweepPoint> out;
  out.reserve(zeta_grid.size());
  if (chain) {
    std::optional<OrderParams> prev;
    for (double z : zeta_grid) {
      out.push_back(solve_point(z, prev));
      if (out.back().solution) prev = out.back().solution;
    }
  } else {
    std::vector<std::future<SweepPoint>> jobs;
    for (double z : zeta_grid)
      jobs.push_back(std::async(std::launch::async, solve_point, z, std::nullopt));
    for (auto& j : jobs) out.push_back(j.get());
  }
  return out;
}

OrderParams ml_limit_solve(double zeta, double S, const Spectrum& spectrum,
                           const SolverOptions& opts) {
  if (!(zeta > 0.0)) throw ParameterError("ml_limit_solve: zeta must be positive");
  if (zeta >= 1.0)
    throw PhaseBoundaryError("ml_limit_solve: phase transition at zeta = 1 (v, w diverge)");
  if (!(S > 0.0)) throw ParameterError("ml_limit_solve: S must be positive");

  const QuadraturePair quad = opts.quadrature();
  const HazardGrid grid(quad);

  // Unknowns: (log u^2, log v, log q, log rho).
  auto system_at = [&](double z) -> System {
    return [&grid, z](const VectorXd& y, VectorXd& r, VectorXd& s) {
      const double u2 = std::exp(y[0]), v = std::exp(y[1]), rho = std::exp(y[3]);
      const HazardIntegrals h = grid.integrate(y[2], v, rho, u2);
      r.resize(4);
      s.resize(4);
      r[0] = z * v * v - h.w_sq_dev;
      s[0] = z * v * v + h.w_sq_dev;
      r[1] = z - h.w_ratio;
      s[1] = z + h.w_ratio;
      r[2] = u2 - h.w;
      s[2] = u2 + h.w;
      r[3] = u2 / rho - (h.w_log + u2 * kEulerGamma);
      s[3] = u2 / rho + std::abs(h.w_log) + u2 * kEulerGamma;
    };
  };
  auto step = [&](double z, const VectorXd& prev, double* norm) -> std::optional<VectorXd> {
    const NewtonOutcome res = newton_solve(system_at(z), prev, opts);
    if (norm) *norm = res.raw_norm;
    if (!res.converged) return std::nullopt;
    return res.y;
  };

  const double z0 = std::min(zeta, opts.zeta_start);
  VectorXd y0(4);
  y0 << std::log(z0), 0.5 * std::log(z0), std::log(z0) + z0, 0.0;
  double norm = kInf;
  auto first = step(z0, y0, &norm);
  if (!first) throw ConvergenceError("ml_limit_solve: no solution at small zeta", norm);
  const VectorXd y = continue_in_zeta(z0, zeta, *first, opts.max_zeta_ratio, step);

  ModelParams mp;
  mp.zeta = zeta;
  mp.eta = 0.0;
  mp.S = S;
  mp.spectrum = spectrum;
  VectorXd r, s;
  system_at(zeta)(y, r, s);

  OrderParams op;
  const double u2 = std::exp(y[0]);
  op.u_tilde = std::sqrt(u2);
  op.v = std::exp(y[1]);
  op.q = std::exp(y[2]);
  op.rho = std::exp(y[3]);
  op.w = op.rho * mp.S_tilde();
  op.g_tilde = 1.0 / u2;
  op.f_tilde = -op.v * op.v / (u2 * u2);
  op.residual_norm = r.lpNorm<Eigen::Infinity>();
  op.converged = true;
  fill_derived(op, mp);
  return op;
}

LargeZetaLimit large_zeta_solve(double eta, double S, const Spectrum& spectrum,
                                const SolverOptions& opts) {
  if (!(eta > 0.0)) throw ParameterError("large_zeta_solve: eta must be positive");
  if (!(S > 0.0)) throw ParameterError("large_zeta_solve: S must be positive");
  const QuadraturePair quad = opts.quadrature();
  const HazardGrid grid(quad);
  const double mean_a = spectrum.mean();
  const double u2 = mean_a / (2.0 * eta);
  const double st = S * std::sqrt(mean_a);

  // For fixed rho: q from the u^2 equation, Q from the g equation; the rho
  // equation is then a scalar root in log rho.
  double log_q = std::log(u2) + u2;
  auto inner = [&](double log_rho, double* Q_out, double* lq_out) {
    const double rho = std::exp(log_rho);
    const double sigma = rho * st;
    log_q = solve_log_q(grid, u2, sigma, rho, log_q);
    const HazardIntegrals h = grid.integrate(log_q, sigma, rho, u2);
    if (Q_out) *Q_out = h.w_ratio;
    if (lq_out) *lq_out = log_q;
    return u2 / rho - (h.w_log + h.w_ratio * S * S * mean_a * rho + u2 * kEulerGamma);
  };
  auto f = [&](double lr) { return inner(lr, nullptr, nullptr); };

  double a = 0.0, b = 0.0;
  double fa = f(a), fb = fa;
  for (int i = 0; i < 60 && fa * fb > 0.0; ++i) {
    if (fa > 0.0) {
      a = b;
      fa = fb;
      b += 0.25;
      fb = f(b);
    } else {
      b = a;
      fb = fa;
      a -= 0.25;
      fa = f(a);
    }
  }
  if (fa * fb > 0.0) throw ConvergenceError("large_zeta_solve: could not bracket rho", fa);
  boost::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(48), iters);
  if (iters >= 200) throw ConvergenceError("large_zeta_solve: rho root did not converge", hi - lo);

  LargeZetaLimit out;
  double lq = 0.0;
  const double lr = 0.5 * (lo + hi);
  inner(lr, &out.Q, &lq);
  out.rho = std::exp(lr);
  out.q = std::exp(lq);
  out.u2 = u2;
  return out;
}

double overfit_measure(const OrderParams& op, const ModelParams& mp) {
  const double u2 = op.u2();
  const double k = op.q * std::exp(-u2) / u2;
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("overfit_measure: k must be positive");
  if (!(op.rho > 0.0)) throw DomainError("overfit_measure: rho must be positive");
  const double eta = mp.eta, zeta = mp.zeta, g = op.g_tilde;
  double bracket = 0.0;
  if (eta > 0.0) {
    const double m21 = spectral_moment(mp.spectrum, 2, 1, eta, g);
    const double m22 = spectral_moment(mp.spectrum, 2, 2, eta, g);
    const double m12 = spectral_moment(mp.spectrum, 1, 2, eta, g);
    bracket = op.w * op.w * mp.spectrum.mean() * m22 / (m21 * m21) - op.f_tilde * m12;
  }
  return eta * zeta * bracket - std::log(k) - std::log(op.rho) + (op.rho - 1.0) * kEulerGamma -
         zeta * eta * mp.S * mp.S;
}

Calibration calibrate_eta(double zeta, double S, const Spectrum& spectrum, double tol,
                          const SolverOptions& opts) {
  if (!(zeta >= 0.05))
    throw ParameterError("calibrate_eta: zeta must be >= 0.05 (equations are stiff near zero)");
  if (!(tol > 0.0)) throw ParameterError("calibrate_eta: tol must be positive");

  ModelParams mp;
  mp.zeta = zeta;
  mp.S = S;
  mp.spectrum = spectrum;

  struct Solved {
    double log_eta;
    OrderParams op;
  };
  std::vector<Solved> solved;
  auto solve_eta = [&](double log_eta) -> const OrderParams& {
    mp.eta = std::exp(log_eta);
    std::optional<OrderParams> init;
    if (!solved.empty()) {
      const auto nearest = std::min_element(solved.begin(), solved.end(), [&](auto& x, auto& y) {
        return std::abs(x.log_eta - log_eta) < std::abs(y.log_eta - log_eta);
      });
      init = nearest->op;
    }
    solved.push_back({log_eta, rs_solve(mp, init, opts)});
    return solved.back().op;
  };
  auto f = [&](double log_eta) { return solve_eta(log_eta).kappa - 1.0; };

  // kappa decreases with eta
  double a = std::log(0.1), b = a;
  double fa = f(a), fb = fa;
  std::vector<double> seen{fa};
  for (int i = 0; i < 40 && fa * fb > 0.0; ++i) {
    if (fa > 0.0) {
      a = b;
      fa = fb;
      b += std::log(2.0);
      if (b > std::log(1e3)) break;
      fb = f(b);
      seen.push_back(fb);
    } else {
      b = a;
      fb = fa;
      a -= std::log(2.0);
      if (a < std::log(1e-8)) break;
      fa = f(a);
      seen.push_back(fa);
    }
  }
  if (fa * fb > 0.0) {
    std::string diag;
    for (double s : seen) diag += " " + fmt_num(s + 1.0);
    throw ConvergenceError("calibrate_eta: could not bracket kappa = 1; kappa values:" + diag,
                           std::abs(fa));
  }

  auto stop = [&](double lo, double hi) {
    return std::abs(hi - lo) < 1e-12 ||
           (!solved.empty() && std::abs(solved.back().op.kappa - 1.0) < 0.01 * tol);
  };
  boost::uintmax_t iters = 100;
  boost::math::tools::toms748_solve(f, a, b, fa, fb, stop, iters);

  const auto best = std::min_element(solved.begin(), solved.end(), [](auto& x, auto& y) {
    return std::abs(x.op.kappa - 1.0) < std::abs(y.op.kappa - 1.0);
  });
  if (std::abs(best->op.kappa - 1.0) >= tol)
    throw ConvergenceError("calibrate_eta: |kappa - 1| above tolerance",
                           std::abs(best->op.kappa - 1.0));
  Calibration c;
  c.zeta = zeta;
  c.eta_star = std::exp(best->log_eta);
  c.lambda = penalty_lambda(c.eta_star, zeta);
  c.solution = best->op;
  return c;
}

void verify_penalty_table() {
  struct Row {
    double zeta, eta, lambda;
  };
  static constexpr Row rows[] = {
      {0.110, 0.165, 0.036}, {0.552, 0.100, 0.110}, {1.055, 0.062, 0.131}, {2.001, 0.031, 0.124}};
  for (const Row& r : rows) {
    const double lam = penalty_lambda(r.eta, r.zeta);
    // table entries carry three significant digits
    if (std::abs(lam - r.lambda) > 0.02 * r.lambda)
      throw std::logic_error("penalty conversion lambda = 2 eta zeta disagrees with row zeta=" +
                             fmt_num(r.zeta));
  }
}

std::string order_params_csv_header() {
  return "zeta,eta,S,spectrum,u_tilde,v,w,f_tilde,g_tilde,q,rho,k,kappa,sigma,E,residual_norm,"
         "converged";
}

std::string order_params_csv_row(const ModelParams& mp, const OrderParams& op) {
  std::string row;
  for (double x : {mp.zeta, mp.eta, mp.S}) row += fmt_num(x) + ",";
  row += mp.spectrum.id() + ",";
  for (double x : {op.u_tilde, op.v, op.w, op.f_tilde, op.g_tilde, op.q, op.rho, op.k, op.kappa,
                   op.sigma, op.E, op.residual_norm})
    row += fmt_num(x) + ",";
  row += op.converged ? "1" : "0";
  return row;
}

}  // namespace coxrs
