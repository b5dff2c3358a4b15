#include "coxrs/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "coxrs/errors.hpp"

namespace coxrs {

namespace {

constexpr int kMaxHalleyIterations = 50;
constexpr double kTol = 4.0 * std::numeric_limits<double>::epsilon();

// Halley on w e^w - x; only used for 0 < x < 2, where nothing overflows.
double halley_direct(double x, double w) {
  for (int it = 0; it < kMaxHalleyIterations; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    w -= step;
    if (std::abs(step) <= kTol * std::max(std::abs(w), 1e-300)) break;
  }
  return w;
}

void check_order(int n, int cap, const char* name) {
  if (n < 1 || n > cap)
    throw ParameterError(std::string(name) + ": order must lie in [1, " + std::to_string(cap) +
                         "], got " + std::to_string(n));
}

}  // namespace

double lambert_w0(double x) {
  if (std::isnan(x) || x < 0.0)
    throw DomainError("lambert_w0: argument must be nonnegative, got " + std::to_string(x));
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;
  if (x >= 2.0) return lambert_w0_exp(std::log(x));

  double w;
  if (x < 1e-3) {
    w = x * (1.0 - x * (1.0 - 1.5 * x));
    if (x < 1e-10) return w;  // series error below x^4
  } else {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  }
  return halley_direct(x, w);
}

double lambert_w0_exp(double z) {
  if (std::isnan(z)) throw DomainError("lambert_w0_exp: NaN argument");
  if (z < std::numbers::ln2) return lambert_w0(std::exp(z));

  // Solve w + log(w) = z; the root is > 0.4 here.
  const double lz = std::log(z);
  double w = z - lz + lz / z;
  w = std::max(w, 0.3);
  for (int it = 0; it < kMaxHalleyIterations; ++it) {
    const double h = w + std::log(w) - z;
    const double h1 = 1.0 + 1.0 / w;
    const double h2 = -1.0 / (w * w);
    const double step = h / (h1 - h * h2 / (2.0 * h1));
    w -= step;
    if (std::abs(step) <= kTol * w) break;
  }
  return w;
}

QuadratureRule gauss_hermite(int n) {
  check_order(n, kMaxGaussOrder, "gauss_hermite");

  // Roots of the physicists' Hermite polynomial via Newton on the
  // orthonormal recurrence, then rescaled to the standard normal measure.
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  const int m = (n + 1) / 2;
  std::vector<double> x(n), w(n);
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];

    double pp = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw ConvergenceError("gauss_hermite: Newton did not converge", 0.0);
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
  }

  QuadratureRule rule;
  rule.kind = Measure::kGaussian;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    // x is stored in decreasing order
    rule.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
    rule.weights[i] = w[n - 1 - i] * inv_sqrt_pi;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gauss_laguerre(int n) {
  check_order(n, kMaxGaussOrder, "gauss_laguerre");

  // Laguerre values are carried as L_j(z) exp(-z/2), which stays bounded by
  // one and keeps the recurrence finite for the largest roots.
  QuadratureRule rule;
  rule.kind = Measure::kExponential;
  std::vector<double> x(n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      z = 3.0 / (1.0 + 2.4 * n);
    } else if (i == 1) {
      z += 15.0 / (1.0 + 2.5 * n);
    } else {
      const double ai = i - 1;
      z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2]);
    }

    double p1 = 0.0, p2 = 0.0, pp = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      p1 = std::exp(-0.5 * z);
      p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0 - z) * p2 - j * p3) / (j + 1);
      }
      pp = n * (p1 - p2) / z;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14 * std::max(1.0, z)) {
        converged = true;
        break;
      }
    }
    if (!converged) throw ConvergenceError("gauss_laguerre: Newton did not converge", 0.0);
    x[i] = z;

    // w = -1 / (n L_n'(z) L_{n-1}(z)); the scaled values carry exp(-z).
    const double log_w = -z - std::log(std::abs(pp * n * p2));
    const double wi = std::exp(log_w);
    if (wi > 0.0) {
      rule.nodes.push_back(z);
      rule.weights.push_back(wi);
    }
  }
  return rule;
}

QuadratureRule exponential_rule(int n) {
  if (n < 2 || n > 4096)
    throw ParameterError("exponential_rule: order must lie in [2, 4096], got " + std::to_string(n));

  constexpr double t_lo = -4.0;
  constexpr double t_hi = 3.9;
  const double h = (t_hi - t_lo) / (n - 1);

  QuadratureRule rule;
  rule.kind = Measure::kExponential;
  rule.nodes.reserve(n);
  rule.weights.reserve(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = t_lo + i * h;
    const double emt = std::exp(-t);
    const double xi = std::exp(t - emt);
    const double wi = h * xi * (1.0 + emt) * std::exp(-xi);
    if (wi <= 0.0) continue;
    rule.nodes.push_back(xi);
    rule.weights.push_back(wi);
    total += wi;
  }
  for (double& wi : rule.weights) wi /= total;
  return rule;
}

}  // namespace coxrs
