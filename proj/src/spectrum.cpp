#include "coxrs/spectrum.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coxrs/errors.hpp"

namespace coxrs {

namespace {

constexpr double kWeightTol = 1e-12;
constexpr double kRenormalizeTol = 1e-6;

std::string format_eps(double eps) {
  std::ostringstream os;
  os << eps;
  return os.str();
}

}  // namespace

Spectrum::Spectrum(std::vector<SpectrumAtom> atoms, std::string id, std::string note)
    : atoms_(std::move(atoms)), id_(std::move(id)), note_(std::move(note)) {
  if (atoms_.empty()) throw ParameterError("spectrum: at least one atom required");
  double total = 0.0;
  for (const auto& a : atoms_) {
    if (!(a.eigenvalue > 0.0) || !std::isfinite(a.eigenvalue))
      throw ParameterError("spectrum: eigenvalues must be positive and finite, got " +
                           std::to_string(a.eigenvalue));
    if (!(a.weight > 0.0) || !std::isfinite(a.weight))
      throw ParameterError("spectrum: weights must be positive, got " + std::to_string(a.weight));
    total += a.weight;
  }
  if (std::abs(total - 1.0) > kRenormalizeTol)
    throw ParameterError("spectrum: weights sum to " + std::to_string(total) + ", expected 1");
  if (std::abs(total - 1.0) > kWeightTol)
    for (auto& a : atoms_) a.weight /= total;
}

double Spectrum::moment(int j) const {
  double acc = 0.0;
  for (const auto& a : atoms_) acc += a.weight * std::pow(a.eigenvalue, j);
  return acc;
}

Spectrum make_spectrum(const SpectrumModel& model) {
  return std::visit(
      [](const auto& m) -> Spectrum {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, spectrum_model::Identity>) {
          return Spectrum({{1.0, 1.0}}, "identity");
        } else if constexpr (std::is_same_v<T, spectrum_model::Pairwise>) {
          if (!(m.epsilon >= 0.0 && m.epsilon < 1.0))
            throw ParameterError("pairwise spectrum: epsilon must lie in [0, 1), got " +
                                 std::to_string(m.epsilon));
          const std::string id = "pairwise:" + format_eps(m.epsilon);
          if (m.epsilon == 0.0) return Spectrum({{1.0, 1.0}}, id);
          return Spectrum({{1.0 + m.epsilon, 0.5}, {1.0 - m.epsilon, 0.5}}, id);
        } else if constexpr (std::is_same_v<T, spectrum_model::UniformRankOne>) {
          if (!(m.epsilon >= 0.0) || !std::isfinite(m.epsilon))
            throw ParameterError("rank-one spectrum: epsilon must be nonnegative");
          return Spectrum({{1.0, 1.0}}, "rank1:" + format_eps(m.epsilon),
                          "outlier eigenvalue 1+(p-1)eps/sqrt(p) has weight 1/p -> 0; bulk "
                          "1-eps/sqrt(p) -> 1");
        } else {
          std::vector<SpectrumAtom> atoms;
          atoms.reserve(m.atoms.size());
          for (const auto& [a, w] : m.atoms) atoms.push_back({a, w});
          return Spectrum(std::move(atoms), "explicit");
        }
      },
      model);
}

double spectral_moment(const Spectrum& s, int j, int k, double eta, double g_tilde) {
  if (j < 0 || k < 0) throw ParameterError("spectral_moment: j and k must be nonnegative");
  if (k >= 1 && eta == 0.0 && g_tilde == 0.0)
    throw DomainError("spectral_moment: singular denominator (eta = g = 0)");
  double acc = 0.0;
  for (const auto& atom : s.atoms()) {
    const double a = atom.eigenvalue;
    double term = std::pow(a, j);
    if (k > 0) term /= std::pow(2.0 * eta + g_tilde * a, k);
    acc += atom.weight * term;
  }
  return acc;
}

Spectrum spectrum_from_json(const std::string& json_text, std::string id) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError(std::string("spectrum json: ") + e.what());
  }
  if (!doc.is_array() || doc.empty())
    throw ParameterError("spectrum json: expected a nonempty array of [eigenvalue, weight] pairs");
  std::vector<SpectrumAtom> atoms;
  for (const auto& entry : doc) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() || !entry[1].is_number())
      throw ParameterError("spectrum json: each entry must be [eigenvalue, weight]");
    atoms.push_back({entry[0].get<double>(), entry[1].get<double>()});
  }
  return Spectrum(std::move(atoms), std::move(id));
}

Spectrum spectrum_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read spectrum file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return spectrum_from_json(buf.str(), "file:" + path);
}

SpectrumModel parse_spectrum_model(const std::string& text) {
  auto eps_after = [&](std::size_t prefix) {
    const std::string tail = text.substr(prefix);
    std::size_t pos = 0;
    double eps = 0.0;
    try {
      eps = std::stod(tail, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tail.size() || tail.empty())
      throw ParameterError("spectrum '" + text + "': cannot parse epsilon");
    return eps;
  };
  if (text == "identity") return spectrum_model::Identity{};
  if (text.rfind("pairwise:", 0) == 0) return spectrum_model::Pairwise{eps_after(9)};
  if (text.rfind("rank1:", 0) == 0) return spectrum_model::UniformRankOne{eps_after(6)};
  if (text.rfind("file:", 0) == 0) {
    const Spectrum s = spectrum_from_json_file(text.substr(5));
    spectrum_model::Explicit e;
    for (const auto& a : s.atoms()) e.atoms.emplace_back(a.eigenvalue, a.weight);
    return e;
  }
  throw ParameterError("unknown spectrum '" + text +
                       "' (expected identity, pairwise:EPS, rank1:EPS or file:PATH)");
}

}  // namespace coxrs
