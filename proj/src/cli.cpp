#include "coxrs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "coxrs/errors.hpp"
#include "coxrs/harness.hpp"
#include "coxrs/rs_solver.hpp"
#include "coxrs/special.hpp"
#include "coxrs/survival_sim.hpp"

namespace coxrs {

namespace {

using nlohmann::json;

struct RunConfig {
  double zeta = 0.5;
  double eta = 0.1;
  double S = 1.0;
  std::string spectrum = "identity";
  int p = 250;
  int N = 0;  // 0: derived from p and zeta
  int replicates = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out;
  int quad_hermite = kDefaultHermiteOrder;
  int quad_laguerre = kDefaultExponentialOrder;
  double tol = 1e-10;
  std::string grid;
  std::string dist = "gaussian";
  std::string correlation = "identity";
  double lambda0 = 1.0;
  double calibration_tol = 1e-6;
};

struct Binding {
  std::string key;
  CLI::Option* option;
  std::function<void(const json&)> load;
  std::function<json()> dump;
};

class Bindings {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, T& ref, const std::string& help) {
    std::string key = flag;
    for (char& c : key)
      if (c == '-') c = '_';
    CLI::Option* opt = app->add_option("--" + flag, ref, help)->capture_default_str();
    list_.push_back({key, opt, [&ref](const json& j) { ref = j.get<T>(); },
                     [&ref] { return json(ref); }});
  }

  void apply_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot read config file '" + path + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParameterError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ParameterError("config file '" + path + "' must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "command") continue;
      auto it = std::find_if(list_.begin(), list_.end(), [&](auto& b) { return b.key == key; });
      if (it == list_.end()) throw ParameterError("config file: unknown key '" + key + "'");
      if (it->option->count() > 0) continue;
      try {
        it->load(value);
      } catch (const json::exception& e) {
        throw ParameterError("config file: bad value for '" + key + "': " + e.what());
      }
    }
  }

  json resolved() const {
    json j = json::object();
    for (const auto& b : list_) j[b.key] = b.dump();
    return j;
  }

 private:
  std::vector<Binding> list_;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string sidecar_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return out.substr(0, dot) + ".json";
  return out + ".json";
}

void emit(const std::string& csv, const json& meta, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << csv;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw ParameterError("cannot write '" + out_path + "'");
  f << csv;
  std::ofstream m(sidecar_path(out_path));
  if (!m) throw ParameterError("cannot write '" + sidecar_path(out_path) + "'");
  m << meta.dump(2) << '\n';
}

SolverOptions solver_options(const RunConfig& c) {
  if (!(c.tol > 0.0)) throw ParameterError("--tol must be positive");
  SolverOptions o;
  o.tol = c.tol;
  o.hermite_order = c.quad_hermite;
  o.exponential_order = c.quad_laguerre;
  o.quadrature();  // validates the orders
  return o;
}

ModelParams model_params(const RunConfig& c) {
  ModelParams mp;
  mp.zeta = c.zeta;
  mp.eta = c.eta;
  mp.S = c.S;
  mp.spectrum = make_spectrum(parse_spectrum_model(c.spectrum));
  mp.validate();
  return mp;
}

CohortConfig cohort_config(const RunConfig& c, double zeta) {
  CohortConfig cc;
  cc.p = c.p;
  if (c.N > 0) {
    cc.N = c.N;
  } else {
    if (!(zeta > 0.0)) throw ParameterError("zeta must be positive");
    cc.N = static_cast<int>(std::lround(c.p / zeta));
  }
  cc.S = c.S;
  cc.covariates = parse_covariate_dist(c.dist);
  cc.correlation = parse_correlation(c.correlation);
  cc.lambda0 = c.lambda0;
  cc.seed = c.seed;
  cc.validate();
  return cc;
}

std::vector<double> zeta_values(const RunConfig& c) {
  return c.grid.empty() ? std::vector<double>{c.zeta} : parse_grid(c.grid);
}

int cmd_solve(const RunConfig& c, const json& meta, std::ostream& out) {
  const ModelParams mp = model_params(c);
  const SolverOptions opts = solver_options(c);
  const OrderParams op =
      mp.eta == 0.0 ? ml_limit_solve(mp.zeta, mp.S, mp.spectrum, opts) : rs_solve(mp, std::nullopt, opts);
  emit(order_params_csv_header() + '\n' + order_params_csv_row(mp, op) + '\n', meta, c.out, out);
  return kExitOk;
}

int cmd_sweep(const RunConfig& c, const json& meta, std::ostream& out, std::ostream& err) {
  ModelParams mp = model_params(c);
  const SolverOptions opts = solver_options(c);
  const std::vector<double> grid = parse_grid(c.grid.empty() ? "lin:0.05:2:40" : c.grid);
  std::string csv = order_params_csv_header() + '\n';
  int failures = 0;
  if (mp.eta == 0.0) {
    for (double z : grid) {
      mp.zeta = z;
      try {
        csv += order_params_csv_row(mp, ml_limit_solve(z, mp.S, mp.spectrum, opts)) + '\n';
      } catch (const std::exception& e) {
        err << "zeta=" << fmt(z) << ": " << e.what() << '\n';
        ++failures;
      }
    }
  } else {
    for (const SweepPoint& pt : rs_sweep(mp, grid, opts)) {
      mp.zeta = pt.zeta;
      if (pt.solution) {
        csv += order_params_csv_row(mp, *pt.solution) + '\n';
      } else {
        err << "zeta=" << fmt(pt.zeta) << ": " << pt.error << '\n';
        ++failures;
      }
    }
  }
  emit(csv, meta, c.out, out);
  return failures ? kExitConvergence : kExitOk;
}

int cmd_calibrate(const RunConfig& c, const json& meta, std::ostream& out) {
  const Spectrum spectrum = make_spectrum(parse_spectrum_model(c.spectrum));
  const SolverOptions opts = solver_options(c);
  std::string csv = "zeta,eta_star,lambda\n";
  for (double z : zeta_values(c)) {
    const Calibration cal = calibrate_eta(z, c.S, spectrum, c.calibration_tol, opts);
    csv += fmt(cal.zeta) + ',' + fmt(cal.eta_star) + ',' + fmt(cal.lambda) + '\n';
  }
  emit(csv, meta, c.out, out);
  return kExitOk;
}

int cmd_simulate(const RunConfig& c, json meta, std::ostream& out) {
  if (c.out.empty()) throw ParameterError("simulate requires --out PREFIX");
  if (c.replicates < 1) throw ParameterError("--replicates must be at least 1");
  const CohortConfig cc = cohort_config(c, c.zeta);
  for (int r = 0; r < c.replicates; ++r) {
    const std::string prefix = c.out + "_r" + std::to_string(r);
    export_cohort(make_cohort(cc, static_cast<std::uint64_t>(r)), prefix);
    out << prefix << ".csv\n";
  }
  std::ofstream m(c.out + ".json");
  if (!m) throw ParameterError("cannot write '" + c.out + ".json'");
  m << meta.dump(2) << '\n';
  return kExitOk;
}

int cmd_compare(const RunConfig& c, json meta, std::ostream& out, std::ostream& err) {
  ExperimentOptions eo;
  eo.jobs = c.jobs;
  eo.solver = solver_options(c);
  if (c.jobs < 1) throw ParameterError("--jobs must be at least 1");
  std::vector<CohortConfig> cells;
  if (c.N > 0) {
    cells.push_back(cohort_config(c, 0.0));
  } else {
    for (double z : zeta_values(c)) cells.push_back(cohort_config(c, z));
  }

  std::string csv = experiment_csv_header() + '\n';
  int status = kExitOk;
  json details = json::array();
  for (const CohortConfig& cc : cells) {
    const ExperimentSummary s = run_experiment(cc, c.eta, c.replicates, eo);
    csv += experiment_csv_row(s) + '\n';
    if (!s.theory_error.empty()) {
      err << "theory at zeta=" << fmt(cc.zeta()) << ": " << s.theory_error << '\n';
      status = kExitConvergence;
    }
    if (s.failed == s.replicates) status = kExitConvergence;
    json cell = {{"p", cc.p}, {"N", cc.N}, {"zeta", cc.zeta()}, {"failed", s.failed}};
    json failures = json::array();
    for (const auto& r : s.records)
      if (!r.ok) failures.push_back({{"replicate", r.replicate}, {"error", r.error}});
    cell["failures"] = failures;
    details.push_back(cell);
  }
  meta["cells"] = details;
  emit(csv, meta, c.out, out);
  return status;
}

int cmd_selfcheck(const RunConfig& c, std::ostream& out) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    if (!ok) ++failures;
  };
  auto guarded = [&](const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(name, false, e.what());
    }
  };

  guarded("euler-constant", [&] {
    const QuadratureRule rule = exponential_rule(c.quad_laguerre);
    const double g = rule.integrate([](double x) { return -std::log(x); });
    const double e = std::abs(g - kEulerGamma);
    report("euler-constant", e < 1e-8, "|int -log(x) e^-x dx - gamma| = " + fmt(e));
  });

  guarded("lambert-w", [&] {
    double worst = 0.0;
    for (double x : {1e-12, 1e-6, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3, 1e8, 1e100}) {
      const double w = lambert_w0(x);
      worst = std::max(worst, std::abs(w * std::exp(w) - x) / x);
    }
    report("lambert-w", worst < 1e-12, "max relative |W e^W - x| / x = " + fmt(worst));
  });

  guarded("eta-to-zero", [&] {
    const Spectrum spectrum = make_spectrum(spectrum_model::Identity{});
    const SolverOptions opts = solver_options(c);
    const OrderParams ml = ml_limit_solve(0.5, 1.0, spectrum, opts);
    ModelParams mp;
    mp.zeta = 0.5;
    mp.eta = 1e-8;
    const OrderParams rs = rs_solve(mp, std::nullopt, opts);
    double worst = 0.0;
    for (auto [a, b] : {std::pair{rs.v, ml.v}, {rs.w, ml.w}, {rs.rho, ml.rho}, {rs.u2(), ml.u2()},
                        {rs.g_tilde, ml.g_tilde}, {rs.f_tilde, ml.f_tilde}})
      worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
    const double ident = std::abs(ml.w - ml.rho * ml.S_tilde);
    report("eta-to-zero", worst < 1e-4 && ident < 1e-8,
           "max deviation " + fmt(worst) + ", |w - rho S~| = " + fmt(ident));
  });

  guarded("penalty-table", [&] {
    verify_penalty_table();
    report("penalty-table", true, "lambda = 2 eta zeta matches all rows");
  });

  return failures ? kExitInputError : kExitOk;
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (s.empty() || pos != s.size()) throw ParameterError("grid '" + text + "': bad number '" + s + "'");
    return x;
  };
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) parts.push_back(item);
    return parts;
  };

  std::vector<double> grid;
  const bool lin = text.rfind("lin:", 0) == 0, log = text.rfind("log:", 0) == 0;
  if (lin || log) {
    const auto parts = split(text.substr(4), ':');
    if (parts.size() != 3) throw ParameterError("grid '" + text + "': expected START:STOP:COUNT");
    const double a = number(parts[0]), b = number(parts[1]);
    const double n = number(parts[2]);
    if (n < 1 || n != std::floor(n)) throw ParameterError("grid '" + text + "': bad count");
    if (log && !(a > 0.0 && b > 0.0)) throw ParameterError("grid '" + text + "': log grid needs positive ends");
    const int count = static_cast<int>(n);
    for (int i = 0; i < count; ++i) {
      const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
      grid.push_back(lin ? a + t * (b - a) : std::exp(std::log(a) + t * (std::log(b) - std::log(a))));
    }
  } else {
    for (const auto& s : split(text, ',')) grid.push_back(number(s));
  }
  if (grid.empty()) throw ParameterError("grid '" + text + "' is empty");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1])))
      throw ParameterError("grid '" + text + "' must be positive and strictly increasing");
  return grid;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Replica-symmetric theory and simulation of overfitting in ridge Cox regression",
               "coxrs"};
  app.require_subcommand(1);

  RunConfig cfg;
  if (!args.empty() && args[0] == "compare") cfg.replicates = 50;
  std::string config_path;
  std::map<CLI::App*, Bindings> bindings;

  auto theory_flags = [&](CLI::App* sub) {
    Bindings& b = bindings[sub];
    b.add(sub, "zeta", cfg.zeta, "ratio p/N");
    b.add(sub, "eta", cfg.eta, "prior strength");
    b.add(sub, "S", cfg.S, "association strength");
    b.add(sub, "spectrum", cfg.spectrum, "identity | pairwise:EPS | rank1:EPS | file:PATH");
  };
  auto numeric_flags = [&](CLI::App* sub) {
    Bindings& b = bindings[sub];
    b.add(sub, "tol", cfg.tol, "residual tolerance");
    b.add(sub, "quad-hermite", cfg.quad_hermite, "Gauss-Hermite order");
    b.add(sub, "quad-laguerre", cfg.quad_laguerre, "order of the exponential-measure rule");
  };
  auto cohort_flags = [&](CLI::App* sub) {
    Bindings& b = bindings[sub];
    b.add(sub, "zeta", cfg.zeta, "ratio p/N (sets N when --N is absent)");
    b.add(sub, "S", cfg.S, "association strength");
    b.add(sub, "p", cfg.p, "covariate dimension");
    b.add(sub, "N", cfg.N, "cohort size");
    b.add(sub, "dist", cfg.dist, "gaussian | rademacher | uniform | student_t:NU");
    b.add(sub, "correlation", cfg.correlation, "identity | pairwise:EPS | rank1:EPS");
    b.add(sub, "lambda0", cfg.lambda0, "constant baseline hazard");
    b.add(sub, "replicates", cfg.replicates, "number of cohorts");
    b.add(sub, "seed", cfg.seed, "master seed");
  };
  auto common_flags = [&](CLI::App* sub) {
    bindings[sub].add(sub, "out", cfg.out, "output path (stdout when empty)");
    sub->add_option("--config", config_path, "JSON file with flag values; flags take precedence")
        ->check(CLI::ExistingFile);
  };

  CLI::App* solve = app.add_subcommand("solve", "solve the RS equations at one point");
  theory_flags(solve);
  numeric_flags(solve);
  common_flags(solve);

  CLI::App* sweep = app.add_subcommand("sweep", "solve the RS equations along a zeta grid");
  theory_flags(sweep);
  numeric_flags(sweep);
  bindings[sweep].add(sweep, "grid", cfg.grid, "zeta grid: a,b,c | lin:A:B:N | log:A:B:N");
  common_flags(sweep);

  CLI::App* calibrate = app.add_subcommand("calibrate", "find eta with kappa = 1");
  theory_flags(calibrate);
  numeric_flags(calibrate);
  bindings[calibrate].add(calibrate, "grid", cfg.grid, "zeta grid instead of --zeta");
  bindings[calibrate].add(calibrate, "calibration-tol", cfg.calibration_tol, "|kappa - 1| tolerance");
  common_flags(calibrate);

  CLI::App* simulate = app.add_subcommand("simulate", "write synthetic cohorts");
  cohort_flags(simulate);
  common_flags(simulate);

  CLI::App* compare = app.add_subcommand("compare", "fit replicate cohorts and compare with theory");
  cohort_flags(compare);
  numeric_flags(compare);
  bindings[compare].add(compare, "eta", cfg.eta, "prior strength");
  bindings[compare].add(compare, "jobs", cfg.jobs, "worker threads");
  bindings[compare].add(compare, "grid", cfg.grid, "zeta grid at fixed p");
  common_flags(compare);

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "run the analytic invariant suite");
  numeric_flags(selfcheck);

  std::vector<std::string> argv_store{"coxrs"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Bindings& b = bindings[sub];
    if (!config_path.empty()) b.apply_config_file(config_path);
    json meta = b.resolved();
    meta["command"] = sub->get_name();
    if (sub == solve) return cmd_solve(cfg, meta, out);
    if (sub == sweep) return cmd_sweep(cfg, meta, out, err);
    if (sub == calibrate) return cmd_calibrate(cfg, meta, out);
    if (sub == simulate) return cmd_simulate(cfg, meta, out);
    if (sub == compare) return cmd_compare(cfg, meta, out, err);
    return cmd_selfcheck(cfg, out);
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << " (last residual " << e.last_residual() << ")\n";
    return kExitConvergence;
  } catch (const PhaseBoundaryError& e) {
    err << "phase boundary: " << e.what() << '\n';
    return kExitInputError;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const ParameterError& e) {
    err << "invalid parameter: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace coxrs
