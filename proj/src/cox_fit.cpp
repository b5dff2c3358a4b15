#include "coxrs/cox_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "coxrs/errors.hpp"

namespace coxrs {

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

PenalizedCoxProblem::PenalizedCoxProblem(const Eigen::MatrixXd& X, const Eigen::VectorXd& times,
                                         double penalty)
    : penalty_(penalty) {
  const Eigen::Index N = X.rows();
  if (N < 1 || X.cols() < 1) throw ParameterError("cox problem: empty design");
  if (times.size() != N) throw ParameterError("cox problem: times and design disagree in length");
  if (!(penalty >= 0.0)) throw ParameterError("cox problem: penalty must be nonnegative");
  for (Eigen::Index i = 0; i < N; ++i)
    if (!(times[i] > 0.0) || !std::isfinite(times[i]))
      throw ParameterError("cox problem: event times must be positive and finite");

  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
  X_.resize(N, X.cols());
  for (Eigen::Index k = 0; k < N; ++k) {
    X_.row(k) = X.row(order[k]);
    if (k == 0 || times[order[k]] != times[order[k - 1]]) {
      group_start_.push_back(static_cast<int>(k));
      group_time_.push_back(times[order[k]]);
    }
  }
  group_start_.push_back(static_cast<int>(N));
}

PenalizedCoxProblem::Scan PenalizedCoxProblem::scan(const Eigen::VectorXd& x) const {
  if (x.size() != X_.cols()) throw ParameterError("cox problem: coefficient dimension mismatch");
  Scan s;
  s.r = X_ * x;
  const std::size_t G = group_time_.size();
  s.log_s.resize(G);
  double m = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t g = G; g-- > 0;) {
    for (int j = group_start_[g]; j < group_start_[g + 1]; ++j) {
      const double r = s.r[j];
      if (r > m) {
        acc = acc * std::exp(m - r) + 1.0;
        m = r;
      } else {
        acc += std::exp(r - m);
      }
    }
    s.log_s[g] = m + std::log(acc);
  }
  return s;
}

double PenalizedCoxProblem::value(const Eigen::VectorXd& x) const {
  const Scan s = scan(x);
  double acc = 0.0;
  for (std::size_t g = 0; g < group_time_.size(); ++g)
    for (int j = group_start_[g]; j < group_start_[g + 1]; ++j) acc += s.log_s[g] - s.r[j];
  return acc / size() + penalty_ * x.squaredNorm();
}

double PenalizedCoxProblem::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad,
                                     Eigen::MatrixXd* hess) const {
  const Scan s = scan(x);
  const int N = size();
  const std::size_t G = group_time_.size();

  // pi_j = sum over risk sets containing j of exp(r_j) / S_g; sums to N.
  Eigen::VectorXd pi(N);
  double value = 0.0;
  double T = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    const int d = group_start_[g + 1] - group_start_[g];
    T = (g == 0 ? 0.0 : T * std::exp(s.log_s[g] - s.log_s[g - 1])) + d;
    for (int j = group_start_[g]; j < group_start_[g + 1]; ++j) {
      pi[j] = std::exp(s.r[j] - s.log_s[g]) * T;
      value += s.log_s[g] - s.r[j];
    }
  }
  value = value / N + penalty_ * x.squaredNorm();
  grad = X_.transpose() * (pi.array() - 1.0).matrix() / N + 2.0 * penalty_ * x;
  if (!hess) return value;

  const Eigen::Index p = X_.cols();
  Eigen::MatrixXd bar(static_cast<Eigen::Index>(G), p);
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(p);
  for (std::size_t g = G; g-- > 0;) {
    if (g + 1 < G) v *= std::exp(s.log_s[g + 1] - s.log_s[g]);
    for (int j = group_start_[g]; j < group_start_[g + 1]; ++j)
      v += std::exp(s.r[j] - s.log_s[g]) * X_.row(j);
    const int d = group_start_[g + 1] - group_start_[g];
    bar.row(static_cast<Eigen::Index>(g)) = std::sqrt(static_cast<double>(d)) * v;
  }
  const Eigen::MatrixXd W = pi.array().sqrt().matrix().asDiagonal() * X_;

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
  H.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose(), 1.0 / N);
  H.selfadjointView<Eigen::Lower>().rankUpdate(bar.transpose(), -1.0 / N);
  *hess = H.selfadjointView<Eigen::Lower>();
  hess->diagonal().array() += 2.0 * penalty_;
  return value;
}

StepFunction PenalizedCoxProblem::baseline(const Eigen::VectorXd& x) const {
  const Scan s = scan(x);
  StepFunction f;
  f.times = group_time_;
  f.values.resize(group_time_.size());
  double acc = 0.0;
  for (std::size_t g = 0; g < group_time_.size(); ++g) {
    acc += (group_start_[g + 1] - group_start_[g]) * std::exp(-s.log_s[g]);
    f.values[g] = acc;
  }
  return f;
}

namespace {

PenalizedCoxProblem theory_problem(const Cohort& cohort, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("eta must be nonnegative");
  const double p = static_cast<double>(cohort.Z.cols());
  return PenalizedCoxProblem(cohort.Z / std::sqrt(p), cohort.times,
                             eta / static_cast<double>(cohort.Z.rows()));
}

}  // namespace

Objective penalized_objective(const Eigen::VectorXd& b, const Cohort& cohort, double eta) {
  const PenalizedCoxProblem problem = theory_problem(cohort, eta);
  Objective out;
  out.value = problem.evaluate(b, out.gradient, &out.hessian);
  return out;
}

FitResult fit_penalized_cox(const PenalizedCoxProblem& problem, const FitOptions& opts) {
  FitResult res;
  Eigen::VectorXd x = opts.start ? *opts.start : Eigen::VectorXd::Zero(problem.dim());
  if (x.size() != problem.dim()) throw ParameterError("fit: starting point has wrong dimension");

  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  for (int it = 0;; ++it) {
    const double F = problem.evaluate(x, grad, &hess);
    res.objective_history.push_back(F);
    res.objective = F;
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (res.grad_norm < opts.grad_tol) {
      // final full Newton step
      Eigen::LLT<Eigen::MatrixXd> llt(hess);
      if (llt.info() == Eigen::Success) {
        const Eigen::VectorXd polished = x - llt.solve(grad);
        Eigen::VectorXd g2;
        const double F2 = problem.evaluate(polished, g2, nullptr);
        const double n2 = g2.lpNorm<Eigen::Infinity>();
        if (F2 <= F + 1e-15 * std::abs(F) && n2 <= res.grad_norm) {
          x = polished;
          res.objective = F2;
          res.grad_norm = n2;
          res.objective_history.push_back(F2);
        }
      }
      break;
    }
    if (it >= opts.max_iter)
      throw ConvergenceError("cox fit: no convergence after " + std::to_string(it) +
                                 " Newton iterations, gradient norm " +
                                 std::to_string(res.grad_norm),
                             res.grad_norm);

    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success)
      throw DomainError("cox fit: Hessian not positive definite (rank-deficient design)");
    const Eigen::VectorXd dir = -llt.solve(grad);
    const double slope = grad.dot(dir);
    const double slack = 1e-15 * std::abs(F);

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = x + t * dir;
      const double Ft = problem.value(trial);
      if (std::isfinite(Ft) && Ft <= F + 1e-4 * t * slope + slack) {
        x = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw ConvergenceError("cox fit: line search failed, gradient norm " +
                                 std::to_string(res.grad_norm),
                             res.grad_norm);
  }
  res.b_hat = x;
  res.Lambda_hat = problem.baseline(x);
  return res;
}

FitResult fit_ridge_cox(const Cohort& cohort, double eta, const FitOptions& opts) {
  if (eta == 0.0 && cohort.Z.cols() >= cohort.Z.rows())
    throw ParameterError("maximum partial likelihood requires p < N");
  return fit_penalized_cox(theory_problem(cohort, eta), opts);
}

StepFunction breslow_baseline(const Eigen::VectorXd& b_hat, const Cohort& cohort) {
  return theory_problem(cohort, 0.0).baseline(b_hat);
}

void export_fit(const FitResult& fit, const std::string& prefix) {
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw ParameterError("cannot write '" + prefix + ".csv'");
  csv << std::setprecision(17) << "index,b_hat\n";
  for (Eigen::Index i = 0; i < fit.b_hat.size(); ++i) csv << (i + 1) << ',' << fit.b_hat[i] << '\n';

  nlohmann::json meta;
  meta["p"] = fit.b_hat.size();
  meta["objective"] = fit.objective;
  meta["grad_norm"] = fit.grad_norm;
  meta["iterations"] = fit.iterations;
  meta["Lambda_hat"] = {{"times", fit.Lambda_hat.times}, {"values", fit.Lambda_hat.values}};
  std::ofstream js(prefix + ".json");
  if (!js) throw ParameterError("cannot write '" + prefix + ".json'");
  js << meta.dump(2) << '\n';
}

}  // namespace coxrs
