#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "coxrs/rs_solver.hpp"

using namespace coxrs;

namespace {

ModelParams params(double zeta, double eta, SpectrumModel spectrum = spectrum_model::Identity{}) {
  ModelParams mp;
  mp.zeta = zeta;
  mp.eta = eta;
  mp.spectrum = make_spectrum(spectrum);
  return mp;
}

}  // namespace

TEST_CASE("tabulated (zeta, eta) pairs give unbiased slopes") {
  CHECK(std::abs(rs_solve(params(0.110, 0.165)).kappa - 1.0) < 0.02);
  CHECK(std::abs(rs_solve(params(2.001, 0.031)).kappa - 1.0) < 0.03);
}

TEST_CASE("pairwise correlation reduces v at every zeta") {
  for (double z : {0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0}) {
    CAPTURE(z);
    const double v0 = rs_solve(params(z, 0.025, spectrum_model::Pairwise{0.0})).v;
    const double v5 = rs_solve(params(z, 0.025, spectrum_model::Pairwise{0.5})).v;
    const double v99 = rs_solve(params(z, 0.025, spectrum_model::Pairwise{0.99})).v;
    CAPTURE(v0);
    CAPTURE(v5);
    CAPTURE(v99);
    CHECK(v5 < v0);
    CHECK(v99 < v5);
  }
}

TEST_CASE("calibrated eta has a single interior maximum on [0.05, 2]") {
  const Spectrum id = make_spectrum(spectrum_model::Identity{});
  std::vector<double> eta;
  for (double z : {0.05, 0.07, 0.1, 0.14, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0})
    eta.push_back(calibrate_eta(z, 1.0, id).eta_star);
  const auto peak = std::max_element(eta.begin(), eta.end()) - eta.begin();
  CAPTURE(peak);
  CAPTURE(eta.front());
  CAPTURE(eta.back());
  CHECK(peak > 0);
  CHECK(peak + 1 < static_cast<long>(eta.size()));
  for (long i = peak + 1; i < static_cast<long>(eta.size()); ++i) CHECK(eta[i] < eta[i - 1]);
}
