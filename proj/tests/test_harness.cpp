#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "coxrs/errors.hpp"
#include "coxrs/harness.hpp"

using namespace coxrs;

TEST_CASE("cloud statistics of exact and scaled estimates") {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd beta0 = draw_associations(50, 1.5, rng);
  for (const CorrelationModel& m : {CorrelationModel{correlation::Identity{}},
                                    CorrelationModel{correlation::Pairwise{0.5}},
                                    CorrelationModel{correlation::UniformRankOne{0.6}}}) {
    const CloudStats exact = estimate_cloud_stats(beta0, beta0, m);
    CHECK(exact.kappa == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(exact.v < 1e-6);
    const CloudStats twice = estimate_cloud_stats(beta0, 2.0 * beta0, m);
    CHECK(twice.kappa == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(twice.w() == doctest::Approx(2.0 * twice.S_tilde).epsilon(1e-14));
  }
  const CloudStats id = estimate_cloud_stats(beta0, beta0, correlation::Identity{});
  CHECK(id.S_tilde == doctest::Approx(1.5).epsilon(1e-14));
  CHECK_THROWS_AS(estimate_cloud_stats(Eigen::VectorXd::Zero(50), beta0, correlation::Identity{}),
                  ParameterError);
}

TEST_CASE("property: cloud statistics split an estimate into signal and noise") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  const int p = 4000;
  const Eigen::VectorXd beta0 = draw_associations(p, 1.0, rng);
  Eigen::VectorXd noise(p);
  for (int i = 0; i < p; ++i) noise[i] = n01(rng);
  // remove the component along beta0 so the decomposition is exact
  noise -= noise.dot(beta0) / beta0.squaredNorm() * beta0;
  noise *= 0.7 * std::sqrt(static_cast<double>(p)) / noise.norm();
  const CloudStats cs = estimate_cloud_stats(beta0, 0.8 * beta0 + noise, correlation::Identity{});
  CHECK(cs.kappa == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(cs.v == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("hazard distortion recovers a power law exactly") {
  StepFunction L;
  for (int i = 1; i <= 200; ++i) {
    const double t = 0.01 * i;
    L.times.push_back(t);
    L.values.push_back(2.0 * std::pow(3.0 * t, 1.5));
  }
  const HazardDistortion d = estimate_hazard_distortion(L, 3.0);
  CHECK(std::abs(d.k - 2.0) < 1e-10);
  CHECK(std::abs(d.rho - 1.5) < 1e-10);

  StepFunction id;
  for (int i = 1; i <= 50; ++i) {
    id.times.push_back(0.1 * i);
    id.values.push_back(0.1 * i);
  }
  const HazardDistortion one = estimate_hazard_distortion(id, 1.0);
  CHECK(std::abs(one.k - 1.0) < 1e-12);
  CHECK(std::abs(one.rho - 1.0) < 1e-12);

  StepFunction few;
  few.times = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  few.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(estimate_hazard_distortion(few, 1.0, 0.0), ParameterError);
}

TEST_CASE("mean_sd ignores NaN and uses the sample deviation") {
  const std::vector<double> x = {1.0, 2.0, NAN, 3.0, 4.0};
  const MeanSd m = mean_sd(x);
  CHECK(m.count == 4);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  const std::vector<double> single = {7.0};
  CHECK(mean_sd(single).sd == 0.0);
}

TEST_CASE("experiments are independent of the thread count") {
  CohortConfig c;
  c.p = 40;
  c.N = 100;
  c.seed = 42;
  ExperimentOptions o1, o4;
  o4.jobs = 4;
  const ExperimentSummary a = run_experiment(c, 0.2, 8, o1);
  const ExperimentSummary b = run_experiment(c, 0.2, 8, o4);
  CHECK(experiment_csv_row(a) == experiment_csv_row(b));
  for (int r = 0; r < 8; ++r) {
    CHECK(a.records[r].replicate == static_cast<std::uint64_t>(r));
    CHECK(a.records[r].kappa == b.records[r].kappa);
  }
  REQUIRE(a.theory.has_value());
  CHECK(a.failed == 0);
}

TEST_CASE("property: aggregation is invariant to record order") {
  CohortConfig c;
  c.p = 30;
  c.N = 90;
  ExperimentSummary s = run_experiment(c, 0.3, 6);
  const std::string before = experiment_csv_row(s);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(s.records.begin(), s.records.end(), rng);
    aggregate(s);
    CHECK(experiment_csv_row(s) == before);
  }
}

TEST_CASE("failed replicates are recorded, not aborted") {
  CohortConfig c;
  c.p = 30;
  c.N = 60;
  c.S = 2.0;
  ExperimentOptions o;
  o.fit.max_iter = 1;
  const ExperimentSummary s = run_experiment(c, 0.01, 3, o);
  CHECK(s.failed == 3);
  CHECK(s.kappa.count == 0);
  for (const auto& r : s.records) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
  }

  CohortConfig ml;
  ml.p = 30;
  ml.N = 20;
  CHECK_THROWS_AS(run_experiment(ml, 0.0, 2), ParameterError);
}

TEST_CASE("hazard estimates agree with the maximum likelihood theory") {
  CohortConfig c;
  c.p = 400;
  c.N = 800;
  c.seed = 5;
  ExperimentOptions o;
  o.jobs = 4;
  const ExperimentSummary s = run_experiment(c, 1e-6, 4, o);
  REQUIRE(s.theory.has_value());
  CHECK(s.failed == 0);
  CHECK(std::abs(s.rho_hat.mean / s.theory->rho - 1.0) < 0.10);
  CHECK(std::abs(s.k_hat.mean / s.theory->k - 1.0) < 0.10);
  CHECK(std::abs(s.kappa.mean / s.theory->kappa - 1.0) < 0.10);
}

TEST_CASE("p^-1 beta0.A beta0 self-averages") {
  const std::vector<int> grid = {100, 400, 1600, 6400};
  const SelfAveragingResult r = self_averaging_study(grid, correlation::Pairwise{0.5}, 1.0, 200);
  CHECK(r.target == doctest::Approx(1.0));
  CHECK(std::abs(r.slope + 0.5) < 0.1);
  for (const auto& row : r.rows) CHECK(std::abs(row.mean - r.target) < 4.0 * row.standard_error);
}

TEST_CASE("csv header and rows have the same number of fields") {
  CohortConfig c;
  c.p = 20;
  c.N = 60;
  const ExperimentSummary s = run_experiment(c, 0.5, 2);
  const std::string h = experiment_csv_header(), row = experiment_csv_row(s);
  CHECK(std::count(h.begin(), h.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(h.rfind("zeta,eta,S,p,N,", 0) == 0);
}
