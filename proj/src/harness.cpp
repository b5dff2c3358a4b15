#include "coxrs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "coxrs/errors.hpp"

namespace coxrs {

namespace {

constexpr std::uint64_t kStreamSelfAveraging = 3;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ParameterError("least squares: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

ReplicateRecord run_replicate(const CohortConfig& config, double eta, std::uint64_t rep,
                              const FitOptions& fit_opts) {
  ReplicateRecord rec;
  rec.replicate = rep;
  try {
    const Cohort cohort = make_cohort(config, rep);
    const FitResult fit = fit_ridge_cox(cohort, eta, fit_opts);
    const CloudStats cs = estimate_cloud_stats(cohort.beta0, fit.b_hat, config.correlation);
    rec.kappa = cs.kappa;
    rec.v = cs.v;
    rec.w = cs.w();
    rec.iterations = fit.iterations;
    try {
      const HazardDistortion hd = estimate_hazard_distortion(fit.Lambda_hat, config.lambda0);
      rec.k_hat = hd.k;
      rec.rho_hat = hd.rho;
    } catch (const ParameterError&) {
      rec.k_hat = rec.rho_hat = std::numeric_limits<double>::quiet_NaN();
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

CloudStats estimate_cloud_stats(const Eigen::VectorXd& beta0, const Eigen::VectorXd& b_hat,
                                const CorrelationModel& model) {
  if (beta0.size() != b_hat.size()) throw ParameterError("cloud stats: dimension mismatch");
  if (beta0.size() == 0 || beta0.squaredNorm() == 0.0)
    throw ParameterError("cloud stats: degenerate (zero) true association vector");
  const double p = static_cast<double>(beta0.size());
  const Eigen::VectorXd Ab0 = apply_correlation(model, beta0);
  const double b0Ab0 = beta0.dot(Ab0);
  CloudStats cs;
  cs.kappa = Ab0.dot(b_hat) / b0Ab0;
  cs.S_tilde = std::sqrt(b0Ab0 / p);
  const double c = b_hat.dot(apply_correlation(model, b_hat)) / p;
  cs.v = std::sqrt(std::max(0.0, c - cs.kappa * cs.kappa * cs.S_tilde * cs.S_tilde));
  return cs;
}

HazardDistortion estimate_hazard_distortion(const StepFunction& Lambda_hat, double lambda0,
                                            double trim) {
  if (!(lambda0 > 0.0)) throw ParameterError("hazard distortion: lambda0 must be positive");
  if (!(trim >= 0.0 && trim < 1.0)) throw ParameterError("hazard distortion: trim outside [0, 1)");
  const std::size_t n = Lambda_hat.times.size();
  const auto skip = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n)));
  std::vector<double> x, y;
  for (std::size_t i = skip; i < n; ++i) {
    const double t = Lambda_hat.times[i], L = Lambda_hat.values[i];
    if (t > 0.0 && L > 0.0 && std::isfinite(t) && std::isfinite(L)) {
      x.push_back(std::log(lambda0 * t));
      y.push_back(std::log(L));
    }
  }
  if (static_cast<int>(x.size()) < kHazardMinPoints)
    throw ParameterError("hazard distortion: " + std::to_string(x.size()) +
                         " usable points, need at least " + std::to_string(kHazardMinPoints));
  const LineFit f = least_squares(x, y);
  return {std::exp(f.intercept), f.slope};
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  double sum = 0.0;
  for (double x : values)
    if (!std::isnan(x)) {
      sum += x;
      ++out.count;
    }
  if (out.count == 0) {
    out.mean = out.sd = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = sum / out.count;
  double ss = 0.0;
  for (double x : values)
    if (!std::isnan(x)) ss += (x - out.mean) * (x - out.mean);
  out.sd = out.count > 1 ? std::sqrt(ss / (out.count - 1)) : 0.0;
  return out;
}

void aggregate(ExperimentSummary& s) {
  std::sort(s.records.begin(), s.records.end(),
            [](const auto& a, const auto& b) { return a.replicate < b.replicate; });
  std::vector<double> kappa, v, w, rho, k;
  s.failed = 0;
  for (const auto& r : s.records) {
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    kappa.push_back(r.kappa);
    v.push_back(r.v);
    w.push_back(r.w);
    rho.push_back(r.rho_hat);
    k.push_back(r.k_hat);
  }
  s.kappa = mean_sd(kappa);
  s.v = mean_sd(v);
  s.w = mean_sd(w);
  s.rho_hat = mean_sd(rho);
  s.k_hat = mean_sd(k);
}

ExperimentSummary run_experiment(const CohortConfig& config, double eta, int replicates,
                                 const ExperimentOptions& opts) {
  config.validate();
  if (replicates < 1) throw ParameterError("experiment: replicates must be at least 1");
  if (!(eta >= 0.0)) throw ParameterError("experiment: eta must be nonnegative");
  if (eta == 0.0 && config.p >= config.N)
    throw ParameterError("experiment: eta = 0 requires p < N");

  ExperimentSummary s;
  s.config = config;
  s.eta = eta;
  s.replicates = replicates;
  s.records.resize(static_cast<std::size_t>(replicates));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r; (r = next.fetch_add(1)) < replicates;)
      s.records[static_cast<std::size_t>(r)] =
          run_replicate(config, eta, static_cast<std::uint64_t>(r), opts.fit);
  };
  const int jobs = std::max(1, std::min(opts.jobs, replicates));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  aggregate(s);

  if (opts.with_theory) {
    const Spectrum spectrum = correlation_spectrum(config.correlation);
    try {
      if (eta > 0.0) {
        ModelParams mp;
        mp.zeta = config.zeta();
        mp.eta = eta;
        mp.S = config.S;
        mp.spectrum = spectrum;
        s.theory = rs_solve(mp, std::nullopt, opts.solver);
      } else {
        s.theory = ml_limit_solve(config.zeta(), config.S, spectrum, opts.solver);
      }
    } catch (const std::exception& e) {
      s.theory_error = e.what();
    }
  }
  return s;
}

std::string experiment_csv_header() {
  return "zeta,eta,S,p,N,covariates,correlation,lambda0,seed,replicates,failed,"
         "theory_kappa,theory_w,theory_v,theory_rho,theory_k,"
         "kappa_mean,kappa_sd,w_mean,w_sd,v_mean,v_sd,rho_hat_mean,rho_hat_sd,k_hat_mean,k_hat_sd";
}

std::string experiment_csv_row(const ExperimentSummary& s) {
  const CohortConfig& c = s.config;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const OrderParams* th = s.theory ? &*s.theory : nullptr;
  std::string row = fmt(c.zeta()) + ',' + fmt(s.eta) + ',' + fmt(c.S) + ',' + std::to_string(c.p) +
                    ',' + std::to_string(c.N) + ',' + to_string(c.covariates) + ',' +
                    to_string(c.correlation) + ',' + fmt(c.lambda0) + ',' + std::to_string(c.seed) +
                    ',' + std::to_string(s.replicates) + ',' + std::to_string(s.failed);
  for (double x : {th ? th->kappa : nan, th ? th->w : nan, th ? th->v : nan, th ? th->rho : nan,
                   th ? th->k : nan})
    row += ',' + fmt(x);
  for (const MeanSd* m : {&s.kappa, &s.w, &s.v, &s.rho_hat, &s.k_hat})
    row += ',' + fmt(m->mean) + ',' + fmt(m->sd);
  return row;
}

SelfAveragingResult self_averaging_study(std::span<const int> p_grid,
                                         const CorrelationModel& correlation, double S,
                                         int replicates, std::uint64_t seed) {
  if (p_grid.size() < 2) throw ParameterError("self-averaging: need at least two dimensions");
  if (replicates < 2) throw ParameterError("self-averaging: need at least two replicates");
  if (!(S > 0.0)) throw ParameterError("self-averaging: S must be positive");
  for (std::size_t i = 0; i < p_grid.size(); ++i)
    if (p_grid[i] < 1 || (i > 0 && p_grid[i] <= p_grid[i - 1]))
      throw ParameterError("self-averaging: p grid must be positive and increasing");

  SelfAveragingResult out;
  out.target = S * S * correlation_spectrum(correlation).mean();
  std::vector<double> logp, logsd;
  for (int p : p_grid) {
    std::vector<double> vals(static_cast<std::size_t>(replicates));
    for (int r = 0; r < replicates; ++r) {
      auto rng = keyed_stream(seed, static_cast<std::uint64_t>(r), kStreamSelfAveraging,
                              static_cast<std::uint64_t>(p));
      std::normal_distribution<double> normal(0.0, S);
      Eigen::VectorXd beta(p);
      for (int i = 0; i < p; ++i) beta[i] = normal(rng);
      vals[static_cast<std::size_t>(r)] = beta.dot(apply_correlation(correlation, beta)) / p;
    }
    const MeanSd ms = mean_sd(vals);
    out.rows.push_back({p, ms.mean, ms.sd, ms.sd / std::sqrt(static_cast<double>(replicates))});
    logp.push_back(std::log(static_cast<double>(p)));
    logsd.push_back(std::log(ms.sd));
  }
  out.slope = least_squares(logp, logsd).slope;
  return out;
}

}  // namespace coxrs
