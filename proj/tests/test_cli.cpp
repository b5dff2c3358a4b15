#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coxrs/cli.hpp"
#include "coxrs/errors.hpp"

using namespace coxrs;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = run_command(args, out, err);
  return {status, out.str(), err.str()};
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  return fields;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "coxrs_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("solve prints the order-parameter schema") {
  const Run r = run({"solve", "--zeta", "0.110", "--eta", "0.165"});
  REQUIRE(r.status == kExitOk);
  const auto ls = lines(r.out);
  REQUIRE(ls.size() == 2);
  CHECK(ls[0] ==
        "zeta,eta,S,spectrum,u_tilde,v,w,f_tilde,g_tilde,q,rho,k,kappa,sigma,E,residual_norm,"
        "converged");
  const auto header = split(ls[0]), row = split(ls[1]);
  REQUIRE(row.size() == header.size());
  CHECK(std::stod(row[12]) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("solve writes a CSV and a JSON sidecar") {
  const fs::path out = scratch("solve.csv");
  const Run r = run({"solve", "--zeta", "0.3", "--eta", "0.2", "--out", out.string()});
  REQUIRE(r.status == kExitOk);
  CHECK(r.out.empty());
  CHECK(fs::exists(out));
  const auto meta = nlohmann::json::parse(slurp(scratch("solve.json")));
  CHECK(meta["command"] == "solve");
  CHECK(meta["zeta"].get<double>() == 0.3);
  CHECK(meta.contains("quad_hermite"));
}

TEST_CASE("invalid input exits with status 1 and writes nothing") {
  const fs::path out = scratch("bad.csv");
  fs::remove(out);
  const Run r = run({"solve", "--zeta", "-1", "--eta", "0.1", "--out", out.string()});
  CHECK(r.status == kExitInputError);
  CHECK_FALSE(r.err.empty());
  CHECK_FALSE(fs::exists(out));

  CHECK(run({"solve", "--no-such-flag", "1"}).status == kExitInputError);
  CHECK(run({"frobnicate"}).status == kExitInputError);
  CHECK(run({}).status == kExitInputError);
  CHECK(run({"solve", "--zeta", "1.5", "--eta", "0"}).status == kExitInputError);
  CHECK(run({"simulate", "--p", "10"}).status == kExitInputError);
  CHECK(run({"compare", "--correlation", "pairwise:0.5", "--p", "7", "--N", "20"}).status ==
        kExitInputError);
}

TEST_CASE("help exits with status 0") {
  const Run r = run({"--help"});
  CHECK(r.status == kExitOk);
  CHECK(r.out.find("calibrate") != std::string::npos);
}

TEST_CASE("config files supply values that flags override") {
  const fs::path cfg = scratch("config.json");
  {
    std::ofstream f(cfg);
    f << R"({"zeta": 0.2, "eta": 0.5})";
  }
  const Run a = run({"solve", "--config", cfg.string()});
  REQUIRE(a.status == kExitOk);
  auto row = split(lines(a.out)[1]);
  CHECK(std::stod(row[0]) == 0.2);
  CHECK(std::stod(row[1]) == 0.5);

  const Run b = run({"solve", "--config", cfg.string(), "--eta", "0.25"});
  REQUIRE(b.status == kExitOk);
  row = split(lines(b.out)[1]);
  CHECK(std::stod(row[0]) == 0.2);
  CHECK(std::stod(row[1]) == 0.25);

  {
    std::ofstream f(cfg);
    f << R"({"zeta": 0.2, "colour": "blue"})";
  }
  CHECK(run({"solve", "--config", cfg.string()}).status == kExitInputError);
}

TEST_CASE("sweep and calibrate schemas") {
  const Run s = run({"sweep", "--eta", "0.1", "--grid", "0.1,0.2,0.4"});
  REQUIRE(s.status == kExitOk);
  CHECK(lines(s.out).size() == 4);

  const Run c = run({"calibrate", "--zeta", "0.110"});
  REQUIRE(c.status == kExitOk);
  const auto ls = lines(c.out);
  REQUIRE(ls.size() == 2);
  CHECK(ls[0] == "zeta,eta_star,lambda");
  const auto row = split(ls[1]);
  CHECK(std::stod(row[1]) == doctest::Approx(0.165).epsilon(0.05));
  CHECK(std::stod(row[2]) == doctest::Approx(2.0 * 0.110 * std::stod(row[1])).epsilon(1e-9));
}

TEST_CASE("simulate writes one cohort per replicate") {
  const fs::path prefix = scratch("cohort");
  const Run r = run({"simulate", "--p", "5", "--N", "12", "--replicates", "2", "--seed", "7",
                     "--out", prefix.string()});
  REQUIRE(r.status == kExitOk);
  for (int k = 0; k < 2; ++k) {
    const fs::path csv = prefix.string() + "_r" + std::to_string(k) + ".csv";
    CHECK(fs::exists(csv));
    CHECK(lines(slurp(csv)).size() == 13);
  }
  const auto meta = nlohmann::json::parse(slurp(prefix.string() + ".json"));
  CHECK(meta["seed"] == 7);
}

TEST_CASE("compare with a fixed seed is reproducible") {
  const fs::path a = scratch("cmp_a.csv"), b = scratch("cmp_b.csv");
  const std::vector<std::string> base = {"compare", "--p", "30", "--N", "90", "--eta", "0.2",
                                         "--replicates", "4", "--seed", "42"};
  auto with = [&](const fs::path& out, const std::string& jobs) {
    auto args = base;
    args.insert(args.end(), {"--jobs", jobs, "--out", out.string()});
    return run(args);
  };
  REQUIRE(with(a, "1").status == kExitOk);
  REQUIRE(with(b, "3").status == kExitOk);
  CHECK(slurp(a) == slurp(b));
  const auto ls = lines(slurp(a));
  REQUIRE(ls.size() == 2);
  CHECK(split(ls[0]).size() == split(ls[1]).size());
  const auto meta = nlohmann::json::parse(slurp(scratch("cmp_a.json")));
  CHECK(meta["cells"].size() == 1);
}

TEST_CASE("selfcheck passes") {
  const Run r = run({"selfcheck"});
  CHECK(r.status == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(lines(r.out).size() == 4);
}

TEST_CASE("parse_grid") {
  CHECK(parse_grid("0.1,0.2,0.5") == std::vector<double>{0.1, 0.2, 0.5});
  const auto lin = parse_grid("lin:1:2:3");
  REQUIRE(lin.size() == 3);
  CHECK(lin[1] == doctest::Approx(1.5));
  const auto lg = parse_grid("log:0.01:100:5");
  REQUIRE(lg.size() == 5);
  CHECK(lg[2] == doctest::Approx(1.0));
  CHECK(lg.back() == doctest::Approx(100.0));
  CHECK_THROWS_AS(parse_grid("0.2,0.1"), ParameterError);
  CHECK_THROWS_AS(parse_grid("-1,2"), ParameterError);
  CHECK_THROWS_AS(parse_grid("lin:1:2"), ParameterError);
  CHECK_THROWS_AS(parse_grid(""), ParameterError);
}
