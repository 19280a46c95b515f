#include "crysi/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "crysi/rng.hpp"

namespace crysi {

std::string to_string(ToyKind k) {
  switch (k) {
    case ToyKind::TorusGaussianMixture: return "torus_gaussian_mixture";
    case ToyKind::PerovskiteLike: return "perovskite_like";
    case ToyKind::TwoSpeciesChain: return "two_species_chain";
  }
  return "?";
}

ToyKind parse_toy_kind(const std::string& s) {
  for (auto k : {ToyKind::TorusGaussianMixture, ToyKind::PerovskiteLike, ToyKind::TwoSpeciesChain})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown toy dataset kind '" + s + "'");
}

const std::vector<int>& perovskite_a_sites() {
  static const std::vector<int> v{20, 38, 56};  // Ca, Sr, Ba
  return v;
}

const std::vector<int>& perovskite_b_sites() {
  static const std::vector<int> v{22, 40, 50};  // Ti, Zr, Sn
  return v;
}

std::vector<Vec3> mixture_modes(std::size_t n) {
  static const std::vector<Vec3> all{{0.25, 0.25, 0.25}, {0.75, 0.75, 0.25}, {0.75, 0.25, 0.75}, {0.25, 0.75, 0.75},
                                     {0.75, 0.75, 0.75}, {0.25, 0.25, 0.75}, {0.25, 0.75, 0.25}, {0.75, 0.25, 0.25}};
  if (n < 1 || n > all.size()) throw std::invalid_argument("torus mixture supports 1..8 atoms per cell");
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<Structure> Dataset::subset(const std::vector<std::size_t>& idx) const {
  std::vector<Structure> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(structures.at(i));
  return out;
}

namespace {

Mat3 cubic(double a) { return {Vec3{a, 0.0, 0.0}, Vec3{0.0, a, 0.0}, Vec3{0.0, 0.0, a}}; }

Vec3 jitter(const Vec3& x, double sigma, Rng& rng) {
  return wrap(Vec3{x[0] + sigma * rng.normal(), x[1] + sigma * rng.normal(), x[2] + sigma * rng.normal()});
}

Structure perovskite(const ToyDatasetSpec& spec, Rng& rng) {
  const auto& as = perovskite_a_sites();
  const auto& bs = perovskite_b_sites();
  const std::size_t ia = rng.index(as.size()), ib = rng.index(bs.size());
  const double a0 = 3.70 + 0.15 * static_cast<double>(ia) + 0.25 * static_cast<double>(ib);
  const double a = a0 * std::exp(spec.lattice_noise * rng.normal());
  static const std::vector<Vec3> sites{{0.0, 0.0, 0.0}, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.0}, {0.5, 0.0, 0.5}, {0.0, 0.5, 0.5}};
  Structure s;
  s.species = {as[ia], bs[ib], kOxygen, kOxygen, kOxygen};
  for (const auto& site : sites) s.coords.push_back(jitter(site, spec.coord_noise, rng));
  s.lattice = cubic(a);
  return s;
}

Structure mixture(const ToyDatasetSpec& spec, Rng& rng) {
  auto modes = mixture_modes(spec.atoms_per_cell);
  // Random atom order so no atom index is tied to a mode.
  for (std::size_t i = modes.size(); i > 1; --i) std::swap(modes[i - 1], modes[rng.index(i)]);
  Structure s;
  for (const auto& m : modes) {
    s.species.push_back(kMixtureElement);
    s.coords.push_back(jitter(m, spec.coord_noise, rng));
  }
  s.lattice = cubic(4.0 * std::exp(spec.lattice_noise * rng.normal()));
  return s;
}

Structure chain(const ToyDatasetSpec& spec, Rng& rng) {
  const std::size_t n = spec.atoms_per_cell;
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("two_species_chain needs an even atom count >= 2");
  Structure s;
  for (std::size_t k = 0; k < n; ++k) {
    s.species.push_back(k % 2 == 0 ? 3 : 9);  // Li, F
    s.coords.push_back(jitter(Vec3{static_cast<double>(k) / static_cast<double>(n), 0.5, 0.5}, spec.coord_noise, rng));
  }
  const double a = 2.0 * static_cast<double>(n) * std::exp(spec.lattice_noise * rng.normal());
  s.lattice = {Vec3{a, 0.0, 0.0}, Vec3{0.0, 4.0, 0.0}, Vec3{0.0, 0.0, 4.0}};
  return s;
}

}  // namespace

Dataset generate_toy_dataset(const ToyDatasetSpec& spec) {
  if (spec.n_structures < 1) throw std::invalid_argument("toy dataset needs at least one structure");
  if (!(spec.coord_noise >= 0.0 && spec.lattice_noise >= 0.0)) throw std::invalid_argument("noise scales must be >= 0");
  Rng rng(spec.seed);
  Dataset d;
  d.spec = spec;
  d.structures.reserve(spec.n_structures);
  for (std::size_t i = 0; i < spec.n_structures; ++i) {
    switch (spec.kind) {
      case ToyKind::PerovskiteLike: d.structures.push_back(perovskite(spec, rng)); break;
      case ToyKind::TorusGaussianMixture: d.structures.push_back(mixture(spec, rng)); break;
      case ToyKind::TwoSpeciesChain: d.structures.push_back(chain(spec, rng)); break;
    }
  }
  std::vector<std::size_t> order(spec.n_structures);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::size_t n_train = spec.n_structures * 6 / 10;
  const std::size_t n_val = spec.n_structures * 2 / 10;
  d.split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  d.split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return d;
}

std::string serialize_structures(const std::vector<Structure>& structures) {
  auto arr = nlohmann::json::array();
  for (const auto& s : structures) arr.push_back(to_json(s));
  return arr.dump(1) + "\n";
}

void save_structures(const std::filesystem::path& path, const std::vector<Structure>& structures) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructureFileError("cannot open '" + path.string() + "' for writing");
  out << serialize_structures(structures);
  if (!out) throw StructureFileError("write to '" + path.string() + "' failed");
}

std::vector<Structure> parse_structures(const std::string& text, int n_elements) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw StructureFileError("parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_array()) throw StructureFileError("structure file must hold a JSON array of records");
  std::vector<Structure> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      out.push_back(structure_from_json(j[i], n_elements));
    } catch (const std::exception& e) {
      throw StructureFileError("record " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Structure> load_structures(const std::filesystem::path& path, int n_elements) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructureFileError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_structures(ss.str(), n_elements);
}

DatasetStats dataset_stats(const std::vector<Structure>& structures) {
  if (structures.empty()) throw std::invalid_argument("dataset_stats: empty dataset");
  DatasetStats st;
  st.lattice_fit = fit_lattice_base(structures);
  std::size_t atoms = 0;
  for (const auto& s : structures) {
    ++st.atom_counts[s.size()];
    for (int a : s.species) st.species_frequency[a] += 1.0;
    atoms += s.size();
  }
  for (auto& [_, f] : st.species_frequency) f /= static_cast<double>(atoms);
  return st;
}

nlohmann::json stats_to_json(const DatasetStats& st) {
  nlohmann::json j;
  auto counts = nlohmann::json::object();
  for (const auto& [n, c] : st.atom_counts) counts[std::to_string(n)] = c;
  j["atom_counts"] = counts;
  auto freq = nlohmann::json::object();
  for (const auto& [a, f] : st.species_frequency) freq[std::to_string(a)] = f;
  j["species_frequency"] = freq;
  const auto& b = st.lattice_fit;
  j["lattice_log_mean"] = b.log_mean;
  j["lattice_log_std"] = b.log_std;
  j["angle_lo"] = b.angle_lo;
  j["angle_hi"] = b.angle_hi;
  return j;
}

nlohmann::json toy_spec_to_json(const ToyDatasetSpec& s) {
  return {{"kind", to_string(s.kind)},       {"n_structures", s.n_structures}, {"atoms_per_cell", s.atoms_per_cell},
          {"coord_noise", s.coord_noise},    {"lattice_noise", s.lattice_noise}, {"seed", s.seed}};
}

ToyDatasetSpec toy_spec_from_json(const nlohmann::json& j) {
  ToyDatasetSpec s;
  s.kind = parse_toy_kind(j.at("kind").get<std::string>());
  s.n_structures = j.value("n_structures", s.n_structures);
  s.atoms_per_cell = j.value("atoms_per_cell", s.atoms_per_cell);
  s.coord_noise = j.value("coord_noise", s.coord_noise);
  s.lattice_noise = j.value("lattice_noise", s.lattice_noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

nlohmann::json manifest_json(const Dataset& d) {
  return {{"spec", toy_spec_to_json(d.spec)},
          {"seed", d.spec.seed},
          {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}}};
}

}  // namespace crysi
