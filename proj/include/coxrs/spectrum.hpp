#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace coxrs {

struct SpectrumAtom {
  double eigenvalue;
  double weight;
};

/// Discrete eigenvalue distribution of the covariate population covariance
/// matrix: positive atoms with weights summing to one.
class Spectrum {
 public:
  /// Validates and, when the weights sum to one within 1e-6, renormalizes.
  Spectrum(std::vector<SpectrumAtom> atoms, std::string id, std::string note = {});

  const std::vector<SpectrumAtom>& atoms() const noexcept { return atoms_; }
  const std::string& id() const noexcept { return id_; }
  const std::string& note() const noexcept { return note_; }

  /// <a^j>
  double moment(int j) const;
  double mean() const { return moment(1); }

 private:
  std::vector<SpectrumAtom> atoms_;
  std::string id_;
  std::string note_;
};

namespace spectrum_model {
struct Identity {};
struct Pairwise {
  double epsilon;
};
struct UniformRankOne {
  double epsilon;
};
struct Explicit {
  std::vector<std::pair<double, double>> atoms;  // (eigenvalue, weight)
};
}  // namespace spectrum_model

using SpectrumModel = std::variant<spectrum_model::Identity, spectrum_model::Pairwise,
                                   spectrum_model::UniformRankOne, spectrum_model::Explicit>;

/// Spectrum of the p -> infinity limit of a covariance model. The uniform
/// rank-one model collapses onto the identity: its single outlier eigenvalue
/// 1 + (p-1) eps / sqrt(p) carries weight 1/p.
Spectrum make_spectrum(const SpectrumModel& model);

/// <a^j / (2 eta + g a)^k>, summed exactly over the atoms.
/// Throws DomainError when k >= 1 and eta = g = 0.
double spectral_moment(const Spectrum& s, int j, int k, double eta, double g_tilde);

/// Parses a JSON array of [eigenvalue, weight] pairs.
Spectrum spectrum_from_json(const std::string& json_text, std::string id = "explicit");
Spectrum spectrum_from_json_file(const std::string& path);

/// Parses "identity", "pairwise:EPS", "rank1:EPS" or "file:PATH".
SpectrumModel parse_spectrum_model(const std::string& text);

}  // namespace coxrs
