#include "coxrs/survival_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "coxrs/errors.hpp"

namespace coxrs {

namespace {

constexpr std::uint64_t kStreamAssociations = 0;
constexpr std::uint64_t kStreamCovariates = 1;
constexpr std::uint64_t kStreamTimes = 2;

class StandardizedDraw {
 public:
  explicit StandardizedDraw(const CovariateSpec& spec)
      : spec_(spec), t_(spec.nu), t_scale_(std::sqrt((spec.nu - 2.0) / spec.nu)) {}

  double operator()(std::mt19937_64& rng) {
    switch (spec_.dist) {
      case CovariateDist::kGaussian:
        return normal_(rng);
      case CovariateDist::kRademacher:
        return (rng() >> 63) ? 1.0 : -1.0;
      case CovariateDist::kUniform:
        return uniform_(rng);
      case CovariateDist::kStudentT:
        return t_(rng) * t_scale_;
    }
    return 0.0;
  }

 private:
  CovariateSpec spec_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{-std::sqrt(3.0), std::sqrt(3.0)};
  std::student_t_distribution<double> t_;
  double t_scale_;
};

double parse_number(const std::string& text, std::size_t from, const std::string& what) {
  const std::string tail = text.substr(from);
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(tail, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (tail.empty() || pos != tail.size()) throw ParameterError("cannot parse " + what + " in '" + text + "'");
  return x;
}

std::string num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

void CohortConfig::validate() const {
  if (p < 1) throw ParameterError("cohort: p must be positive");
  if (N < 1) throw ParameterError("cohort: N must be positive");
  if (!(S > 0.0)) throw ParameterError("cohort: S must be positive");
  if (!(lambda0 > 0.0)) throw ParameterError("cohort: lambda0 must be positive");
  if (covariates.dist == CovariateDist::kStudentT && !(covariates.nu > 2.0))
    throw ParameterError("cohort: student-t needs nu > 2 for finite variance");
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, correlation::Pairwise>) {
          if (p % 2 != 0) throw ParameterError("cohort: pairwise correlation requires even p");
          if (!(m.epsilon >= 0.0 && m.epsilon <= 1.0))
            throw ParameterError("cohort: pairwise epsilon must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, correlation::UniformRankOne>) {
          if (!(m.epsilon >= 0.0) || m.epsilon / std::sqrt(static_cast<double>(p)) > 1.0)
            throw ParameterError("cohort: rank-one epsilon must lie in [0, sqrt(p)]");
        }
      },
      correlation);
}

std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t purpose,
                             std::uint64_t index) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(replicate), hi(replicate),
                    lo(purpose), hi(purpose), lo(index), hi(index)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd draw_associations(int p, double S, std::mt19937_64& rng) {
  if (p < 1) throw ParameterError("draw_associations: p must be positive");
  if (!(S > 0.0)) throw ParameterError("draw_associations: S must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd beta(p);
  double norm = 0.0;
  while (norm == 0.0) {
    for (int i = 0; i < p; ++i) beta[i] = normal(rng);
    norm = beta.norm();
  }
  beta *= S * std::sqrt(static_cast<double>(p)) / norm;
  return beta;
}

Eigen::MatrixXd draw_covariates(int N, int p, const CorrelationModel& correlation,
                                const CovariateSpec& dist, std::uint64_t seed,
                                std::uint64_t replicate) {
  CohortConfig check;
  check.p = p;
  check.N = N;
  check.covariates = dist;
  check.correlation = correlation;
  check.validate();

  Eigen::MatrixXd Z(N, p);
  std::vector<double> y(p);
  for (int i = 0; i < N; ++i) {
    auto rng = keyed_stream(seed, replicate, kStreamCovariates, i);
    StandardizedDraw draw(dist);
    for (int mu = 0; mu < p; ++mu) y[mu] = draw(rng);
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, correlation::Identity>) {
            for (int mu = 0; mu < p; ++mu) Z(i, mu) = y[mu];
          } else if constexpr (std::is_same_v<T, correlation::Pairwise>) {
            const double c = std::sqrt(1.0 - m.epsilon * m.epsilon);
            for (int mu = 0; mu < p; mu += 2) {
              Z(i, mu) = y[mu];
              Z(i, mu + 1) = m.epsilon * y[mu] + c * y[mu + 1];
            }
          } else {
            const double off = m.epsilon / std::sqrt(static_cast<double>(p));
            const double common = draw(rng);
            const double a = std::sqrt(1.0 - off), b = std::sqrt(off);
            for (int mu = 0; mu < p; ++mu) Z(i, mu) = a * y[mu] + b * common;
          }
        },
        correlation);
  }
  return Z;
}

Eigen::VectorXd generate_times(const Eigen::VectorXd& beta0, const Eigen::MatrixXd& Z,
                               double lambda0, std::uint64_t seed, std::uint64_t replicate,
                               int* ties_broken) {
  if (Z.cols() != beta0.size()) throw ParameterError("generate_times: dimension mismatch");
  if (!(lambda0 > 0.0)) throw ParameterError("generate_times: lambda0 must be positive");
  const Eigen::Index N = Z.rows();
  const Eigen::VectorXd risk = Z * beta0 / std::sqrt(static_cast<double>(beta0.size()));
  Eigen::VectorXd t(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    auto rng = keyed_stream(seed, replicate, kStreamTimes, i);
    double u = 0.0;
    while (u <= 0.0) u = std::generate_canonical<double, 53>(rng);
    t[i] = -std::log(u) * std::exp(-risk[i]) / lambda0;
  }

  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
  int ties = 0;
  for (Eigen::Index k = 1; k < N; ++k) {
    if (t[order[k]] <= t[order[k - 1]]) {
      t[order[k]] = std::nextafter(t[order[k - 1]], std::numeric_limits<double>::infinity());
      ++ties;
    }
  }
  if (ties > 0)
    std::clog << "generate_times: separated " << ties << " tied event time(s) by one ulp\n";
  if (ties_broken) *ties_broken = ties;
  return t;
}

Cohort make_cohort(const CohortConfig& config, std::uint64_t replicate) {
  config.validate();
  Cohort c;
  c.config = config;
  c.replicate = replicate;
  auto rng = keyed_stream(config.seed, replicate, kStreamAssociations, 0);
  c.beta0 = draw_associations(config.p, config.S, rng);
  c.Z = draw_covariates(config.N, config.p, config.correlation, config.covariates, config.seed,
                        replicate);
  c.times = generate_times(c.beta0, c.Z, config.lambda0, config.seed, replicate, &c.ties_broken);
  return c;
}

Eigen::VectorXd apply_correlation(const CorrelationModel& model, const Eigen::VectorXd& u) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, correlation::Identity>) {
          return u;
        } else if constexpr (std::is_same_v<T, correlation::Pairwise>) {
          if (u.size() % 2 != 0) throw ParameterError("pairwise correlation requires even p");
          Eigen::VectorXd out = u;
          for (Eigen::Index mu = 0; mu < u.size(); mu += 2) {
            out[mu] += m.epsilon * u[mu + 1];
            out[mu + 1] += m.epsilon * u[mu];
          }
          return out;
        } else {
          const double off = m.epsilon / std::sqrt(static_cast<double>(u.size()));
          return (1.0 - off) * u + Eigen::VectorXd::Constant(u.size(), off * u.sum());
        }
      },
      model);
}

Spectrum correlation_spectrum(const CorrelationModel& model) {
  return std::visit(
      [](const auto& m) -> Spectrum {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, correlation::Identity>)
          return make_spectrum(spectrum_model::Identity{});
        else if constexpr (std::is_same_v<T, correlation::Pairwise>)
          return make_spectrum(spectrum_model::Pairwise{m.epsilon});
        else
          return make_spectrum(spectrum_model::UniformRankOne{m.epsilon});
      },
      model);
}

CovariateSpec parse_covariate_dist(const std::string& text) {
  if (text == "gaussian") return {CovariateDist::kGaussian};
  if (text == "rademacher") return {CovariateDist::kRademacher};
  if (text == "uniform") return {CovariateDist::kUniform};
  if (text == "student_t") return {CovariateDist::kStudentT, 5.0};
  if (text.rfind("student_t:", 0) == 0) {
    const double nu = parse_number(text, 10, "degrees of freedom");
    if (!(nu > 2.0)) throw ParameterError("student_t needs nu > 2");
    return {CovariateDist::kStudentT, nu};
  }
  throw ParameterError("unknown covariate distribution '" + text +
                       "' (expected gaussian, rademacher, uniform or student_t:NU)");
}

std::string to_string(const CovariateSpec& spec) {
  switch (spec.dist) {
    case CovariateDist::kGaussian: return "gaussian";
    case CovariateDist::kRademacher: return "rademacher";
    case CovariateDist::kUniform: return "uniform";
    case CovariateDist::kStudentT: return "student_t:" + num(spec.nu);
  }
  return "?";
}

CorrelationModel parse_correlation(const std::string& text) {
  if (text == "identity") return correlation::Identity{};
  if (text.rfind("pairwise:", 0) == 0) return correlation::Pairwise{parse_number(text, 9, "epsilon")};
  if (text.rfind("rank1:", 0) == 0) return correlation::UniformRankOne{parse_number(text, 6, "epsilon")};
  throw ParameterError("unknown correlation model '" + text +
                       "' (expected identity, pairwise:EPS or rank1:EPS)");
}

std::string to_string(const CorrelationModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, correlation::Identity>) return "identity";
        else if constexpr (std::is_same_v<T, correlation::Pairwise>) return "pairwise:" + num(m.epsilon);
        else return "rank1:" + num(m.epsilon);
      },
      model);
}

void export_cohort(const Cohort& cohort, const std::string& prefix) {
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw ParameterError("cannot write '" + prefix + ".csv'");
  csv << std::setprecision(17);
  csv << "time";
  for (Eigen::Index mu = 0; mu < cohort.Z.cols(); ++mu) csv << ",z" << (mu + 1);
  csv << '\n';
  for (Eigen::Index i = 0; i < cohort.Z.rows(); ++i) {
    csv << cohort.times[i];
    for (Eigen::Index mu = 0; mu < cohort.Z.cols(); ++mu) csv << ',' << cohort.Z(i, mu);
    csv << '\n';
  }

  const CohortConfig& c = cohort.config;
  nlohmann::json meta;
  meta["config"] = {{"p", c.p},
                    {"N", c.N},
                    {"zeta", c.zeta()},
                    {"S", c.S},
                    {"covariates", to_string(c.covariates)},
                    {"correlation", to_string(c.correlation)},
                    {"lambda0", c.lambda0},
                    {"seed", c.seed}};
  meta["replicate"] = cohort.replicate;
  meta["seed"] = c.seed;
  meta["ties_broken"] = cohort.ties_broken;
  meta["beta0"] = std::vector<double>(cohort.beta0.data(), cohort.beta0.data() + cohort.beta0.size());
  std::ofstream js(prefix + ".json");
  if (!js) throw ParameterError("cannot write '" + prefix + ".json'");
  js << meta.dump(2) << '\n';
}

}  // namespace coxrs
