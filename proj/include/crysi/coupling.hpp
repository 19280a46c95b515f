#pragma once

#include <optional>
#include <vector>

#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

namespace crysi {

enum class CoordBase { Uniform, WrappedNormal };
enum class SpeciesBase { AllMasked, FixedComposition };

struct BaseDistributionSpec {
  CoordBase coord_kind = CoordBase::Uniform;
  double coord_sigma = 1.0;  // wrapped-normal width
  // Log-normal lattice lengths per axis; zero spread is a valid degenerate fit.
  Vec3 log_mean{0.0, 0.0, 0.0};
  Vec3 log_std{0.0, 0.0, 0.0};
  // Uniform angle bounds in degrees (alpha, beta, gamma).
  Vec3 angle_lo{90.0, 90.0, 90.0};
  Vec3 angle_hi{90.0, 90.0, 90.0};
  SpeciesBase species_kind = SpeciesBase::AllMasked;

  bool operator==(const BaseDistributionSpec&) const = default;
};

void check_base_spec(const BaseDistributionSpec& spec);

// Sample mean/std (ddof = 0) of log lattice lengths per axis; angle bounds are
// the observed range.
BaseDistributionSpec fit_lattice_base(const std::vector<Structure>& dataset);

// Base structure with n_atoms atoms. With SpeciesBase::FixedComposition the
// species are copied from `composition`, which must then have n_atoms entries.
Structure sample_base(const BaseDistributionSpec& spec, std::size_t n_atoms, Rng& rng,
                      const std::vector<int>* composition = nullptr);

double permutation_cost(const Structure& x0, const Structure& x1, const std::vector<std::size_t>& source_of_target);

struct CouplingResult {
  Structure permuted;
  // permuted atom j is x0 atom source_of_target[j]
  std::vector<std::size_t> source_of_target;
  double cost = 0.0;
};

// Reorders the atoms of x0 to minimise the summed torus distance to x1.
// Atoms are only exchanged within groups of equal species (a fully masked x0
// is one group), so fixed compositions stay aligned.
CouplingResult min_permutation_coupling(const Structure& x0, const Structure& x1);

}  // namespace crysi
