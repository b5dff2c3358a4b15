#pragma once

#include <cstddef>
#include <vector>

namespace coxrs {

inline constexpr double kEulerGamma = 0.57721566490153286;

enum class Measure {
  kGaussian,     // Dz = (2 pi)^{-1/2} exp(-z^2/2) dz on the real line
  kExponential,  // exp(-x) dx on (0, inf)
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  Measure kind = Measure::kGaussian;

  std::size_t size() const noexcept { return nodes.size(); }

  /// Sum of w_i f(x_i).
  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

/// Principal branch of Lambert's W on x >= 0. Throws DomainError for x < 0.
double lambert_w0(double x);

/// W(exp(z)) without forming exp(z); valid for every real z.
double lambert_w0_exp(double z);

inline constexpr int kMaxGaussOrder = 256;

/// n-point Gauss rule for the standard normal measure, 1 <= n <= 256.
QuadratureRule gauss_hermite(int n);

/// n-point Gauss rule for exp(-x) dx on (0, inf), 1 <= n <= 256.
///
/// For n above ~180 the outermost weights are below the smallest positive
/// double; those nodes are dropped, so the rule can hold fewer than n points.
QuadratureRule gauss_laguerre(int n);

/// Rule for exp(-x) dx on (0, inf) built from the substitution
/// x = exp(t - exp(-t)) followed by the trapezoidal rule in t.
///
/// Converges geometrically for integrands with log(x) or x^rho behaviour at
/// the origin, which defeats Gauss-Laguerre (error ~ 1/n for log x). Weights
/// are renormalized to sum to one. Requires 2 <= n <= 4096.
QuadratureRule exponential_rule(int n);

inline constexpr int kDefaultHermiteOrder = 40;
inline constexpr int kDefaultExponentialOrder = 80;

}  // namespace coxrs
