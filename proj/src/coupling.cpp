#include "crysi/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "crysi/hungarian.hpp"

namespace crysi {

void check_base_spec(const BaseDistributionSpec& spec) {
  for (int k = 0; k < 3; ++k) {
    if (!(spec.log_std[k] >= 0.0)) throw std::invalid_argument("lattice log-std must be nonnegative");
    if (!(spec.angle_lo[k] > 0.0 && spec.angle_hi[k] < 180.0 && spec.angle_lo[k] <= spec.angle_hi[k])) {
      throw std::invalid_argument("lattice angle bounds must satisfy 0 < lo <= hi < 180 degrees");
    }
  }
  if (spec.coord_kind == CoordBase::WrappedNormal && !(spec.coord_sigma > 0.0)) {
    throw std::invalid_argument("wrapped-normal width must be positive");
  }
}

BaseDistributionSpec fit_lattice_base(const std::vector<Structure>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("fit_lattice_base: empty dataset");
  BaseDistributionSpec spec;
  const double n = static_cast<double>(dataset.size());
  Vec3 sum{}, sum2{};
  spec.angle_lo = {180.0, 180.0, 180.0};
  spec.angle_hi = {0.0, 0.0, 0.0};
  for (const auto& s : dataset) {
    const Vec3 len = lattice_lengths(s.lattice);
    const Vec3 ang = lattice_angles_deg(s.lattice);
    for (int k = 0; k < 3; ++k) {
      const double l = std::log(len[k]);
      sum[k] += l;
      spec.angle_lo[k] = std::min(spec.angle_lo[k], ang[k]);
      spec.angle_hi[k] = std::max(spec.angle_hi[k], ang[k]);
    }
  }
  for (int k = 0; k < 3; ++k) spec.log_mean[k] = sum[k] / n;
  for (const auto& s : dataset) {
    const Vec3 len = lattice_lengths(s.lattice);
    for (int k = 0; k < 3; ++k) {
      const double d = std::log(len[k]) - spec.log_mean[k];
      sum2[k] += d * d;
    }
  }
  for (int k = 0; k < 3; ++k) spec.log_std[k] = std::sqrt(sum2[k] / n);
  return spec;
}

Structure sample_base(const BaseDistributionSpec& spec, std::size_t n_atoms, Rng& rng,
                      const std::vector<int>* composition) {
  Structure s;
  s.coords.resize(n_atoms);
  for (auto& c : s.coords) {
    for (auto& v : c) {
      v = spec.coord_kind == CoordBase::Uniform ? rng.uniform() : wrap(spec.coord_sigma * rng.normal());
    }
  }
  Vec3 len{}, ang{};
  for (int k = 0; k < 3; ++k) len[k] = std::exp(spec.log_mean[k] + spec.log_std[k] * rng.normal());
  for (int k = 0; k < 3; ++k) {
    ang[k] = rng.uniform(spec.angle_lo[k], spec.angle_hi[k]) * std::numbers::pi / 180.0;
  }
  s.lattice = lattice_from_parameters(len, ang);
  if (spec.species_kind == SpeciesBase::FixedComposition) {
    if (composition == nullptr || composition->size() != n_atoms) {
      throw std::invalid_argument("sample_base: fixed composition requires one species per atom");
    }
    s.species = *composition;
  } else {
    s.species.assign(n_atoms, kMask);
  }
  return s;
}

double permutation_cost(const Structure& x0, const Structure& x1, const std::vector<std::size_t>& source_of_target) {
  double c = 0.0;
  for (std::size_t j = 0; j < x1.size(); ++j) c += torus_distance(x0.coords[source_of_target[j]], x1.coords[j]);
  return c;
}

CouplingResult min_permutation_coupling(const Structure& x0, const Structure& x1) {
  if (x0.size() != x1.size()) {
    throw std::invalid_argument("min_permutation_coupling: atom counts differ (" + std::to_string(x0.size()) + " vs " +
                                std::to_string(x1.size()) + ")");
  }
  const std::size_t n = x0.size();
  // Group by x0 species; each group is matched to x1 atoms of the same species,
  // or to any x1 atoms when x0 is fully masked.
  std::map<int, std::vector<std::size_t>> source_groups, target_groups;
  const bool masked = std::all_of(x0.species.begin(), x0.species.end(), [](int a) { return a == kMask; });
  for (std::size_t i = 0; i < n; ++i) {
    source_groups[masked ? kMask : x0.species[i]].push_back(i);
    target_groups[masked ? kMask : x1.species[i]].push_back(i);
  }
  CouplingResult r;
  r.source_of_target.assign(n, 0);
  for (const auto& [sp, src] : source_groups) {
    const auto it = target_groups.find(sp);
    if (it == target_groups.end() || it->second.size() != src.size()) {
      throw std::invalid_argument("min_permutation_coupling: compositions of x0 and x1 differ");
    }
    const auto& dst = it->second;
    const std::size_t m = src.size();
    std::vector<double> cost(m * m);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) cost[a * m + b] = torus_distance(x0.coords[src[a]], x1.coords[dst[b]]);
    const Assignment as = solve_assignment(cost, m);
    for (std::size_t a = 0; a < m; ++a) r.source_of_target[dst[as.col_of_row[a]]] = src[a];
  }
  r.permuted.lattice = x0.lattice;
  r.permuted.species.resize(n);
  r.permuted.coords.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    r.permuted.species[j] = x0.species[r.source_of_target[j]];
    r.permuted.coords[j] = x0.coords[r.source_of_target[j]];
  }
  r.cost = permutation_cost(x0, x1, r.source_of_target);
  return r;
}

}  // namespace crysi
