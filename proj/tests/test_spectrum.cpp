#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "coxrs/errors.hpp"
#include "coxrs/spectrum.hpp"

using namespace coxrs;

TEST_CASE("make_spectrum builds the documented atoms") {
  const Spectrum id = make_spectrum(spectrum_model::Identity{});
  REQUIRE(id.atoms().size() == 1);
  CHECK(id.atoms()[0].eigenvalue == 1.0);
  CHECK(id.atoms()[0].weight == 1.0);
  CHECK(id.id() == "identity");

  const Spectrum pw = make_spectrum(spectrum_model::Pairwise{0.5});
  REQUIRE(pw.atoms().size() == 2);
  CHECK(pw.atoms()[0].eigenvalue == 1.5);
  CHECK(pw.atoms()[0].weight == 0.5);
  CHECK(pw.atoms()[1].eigenvalue == 0.5);
  CHECK(pw.atoms()[1].weight == 0.5);
  CHECK(pw.id() == "pairwise:0.5");

  const Spectrum r1 = make_spectrum(spectrum_model::UniformRankOne{0.7});
  REQUIRE(r1.atoms().size() == 1);
  CHECK(r1.atoms()[0].eigenvalue == 1.0);
  CHECK_FALSE(r1.note().empty());
}

TEST_CASE("make_spectrum rejects invalid models") {
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Pairwise{1.0}), ParameterError);
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Pairwise{-0.1}), ParameterError);
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Explicit{{{0.0, 1.0}}}), ParameterError);
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Explicit{{{-1.0, 1.0}}}), ParameterError);
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Explicit{{{1.0, 0.5}}}), ParameterError);
  CHECK_THROWS_AS(make_spectrum(spectrum_model::Explicit{}), ParameterError);
}

TEST_CASE("weights within 1e-6 of one are renormalized") {
  const Spectrum s = make_spectrum(spectrum_model::Explicit{{{1.0, 0.5 + 1e-8}, {2.0, 0.5}}});
  CHECK(s.atoms()[0].weight + s.atoms()[1].weight == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("spectral_moment examples") {
  const Spectrum id = make_spectrum(spectrum_model::Identity{});
  CHECK(spectral_moment(id, 1, 1, 0.0, 2.0) == doctest::Approx(0.5).epsilon(1e-15));
  const Spectrum pw = make_spectrum(spectrum_model::Pairwise{0.5});
  CHECK(spectral_moment(pw, 2, 0, 0.0, 0.0) == doctest::Approx(1.25).epsilon(1e-15));
  // 0.5 * 2.25 / 3.05 + 0.5 * 0.25 / 1.05
  CHECK(spectral_moment(pw, 2, 1, 0.025, 2.0) == doctest::Approx(0.48790).epsilon(1e-5));
  CHECK(pw.mean() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pw.moment(2) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("spectral_moment with singular denominator throws") {
  const Spectrum id = make_spectrum(spectrum_model::Identity{});
  CHECK_THROWS_AS(spectral_moment(id, 1, 1, 0.0, 0.0), DomainError);
  CHECK_NOTHROW(spectral_moment(id, 1, 0, 0.0, 0.0));
  CHECK_THROWS_AS(spectral_moment(id, -1, 0, 0.0, 0.0), ParameterError);
}

TEST_CASE("property: k = 0 moments ignore eta and g") {
  const Spectrum s = make_spectrum(spectrum_model::Explicit{{{0.3, 0.2}, {1.1, 0.5}, {2.4, 0.3}}});
  for (int j = 0; j <= 4; ++j) {
    const double ref = s.moment(j);
    for (double eta : {0.0, 0.01, 1.0})
      for (double g : {0.0, 0.5, 7.0}) CHECK(spectral_moment(s, j, 0, eta, g) == ref);
  }
}

TEST_CASE("property: k >= 1 moments decrease strictly in eta and g") {
  const Spectrum s = make_spectrum(spectrum_model::Explicit{{{0.3, 0.2}, {1.1, 0.5}, {2.4, 0.3}}});
  for (int j = 0; j <= 3; ++j)
    for (int k = 1; k <= 2; ++k)
      for (double g = 0.1; g < 20.0; g *= 1.7)
        for (double eta = 0.001; eta < 5.0; eta *= 2.3) {
          const double m = spectral_moment(s, j, k, eta, g);
          CHECK(spectral_moment(s, j, k, eta * 1.01, g) < m);
          CHECK(spectral_moment(s, j, k, eta, g * 1.01) < m);
        }
}

TEST_CASE("property: identity moments equal (2 eta + g)^-k") {
  const Spectrum id = make_spectrum(spectrum_model::Identity{});
  for (int j = 0; j <= 4; ++j)
    for (int k = 0; k <= 3; ++k)
      for (double eta : {0.0, 0.025, 0.3})
        for (double g : {0.2, 1.0, 9.0})
          CHECK(spectral_moment(id, j, k, eta, g) ==
                doctest::Approx(std::pow(2.0 * eta + g, -k)).epsilon(1e-14));
}

TEST_CASE("explicit spectra load from JSON") {
  const Spectrum s = spectrum_from_json("[[0.5, 0.25], [1.5, 0.75]]", "test");
  REQUIRE(s.atoms().size() == 2);
  CHECK(s.mean() == doctest::Approx(1.25));
  CHECK_THROWS_AS(spectrum_from_json("{\"a\": 1}", "bad"), ParameterError);
  CHECK_THROWS_AS(spectrum_from_json("[[1.0]]", "bad"), ParameterError);
  CHECK_THROWS_AS(spectrum_from_json("not json", "bad"), ParameterError);

  const auto path = std::filesystem::temp_directory_path() / "coxrs_spectrum_test.json";
  {
    std::ofstream f(path);
    f << "[[2.0, 0.5], [1.0, 0.5]]";
  }
  const SpectrumModel m = parse_spectrum_model("file:" + path.string());
  CHECK(make_spectrum(m).mean() == doctest::Approx(1.5));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_spectrum_model("file:/nonexistent/spectrum.json"), ParameterError);
}

TEST_CASE("parse_spectrum_model") {
  CHECK(std::holds_alternative<spectrum_model::Identity>(parse_spectrum_model("identity")));
  const auto pw = parse_spectrum_model("pairwise:0.25");
  REQUIRE(std::holds_alternative<spectrum_model::Pairwise>(pw));
  CHECK(std::get<spectrum_model::Pairwise>(pw).epsilon == 0.25);
  CHECK(std::holds_alternative<spectrum_model::UniformRankOne>(parse_spectrum_model("rank1:0.7")));
  CHECK_THROWS_AS(parse_spectrum_model("pairwise:"), ParameterError);
  CHECK_THROWS_AS(parse_spectrum_model("pairwise:0.5x"), ParameterError);
  CHECK_THROWS_AS(parse_spectrum_model("gaussian"), ParameterError);
}
