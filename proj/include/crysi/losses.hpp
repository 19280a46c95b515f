#pragma once

#include <optional>
#include <span>
#include <vector>

#include "crysi/autodiff.hpp"
#include "crysi/interpolants.hpp"

namespace crysi {

// Mean over rows of sum_j (b_j^2 - 2 v_j b_j). Equals the mean squared error
// minus the mean of |v|^2, so gradients coincide with the MSE gradients.
ad::Var velocity_loss(const ad::Var& b_pred, const ad::Var& target);

// Mean over rows of sum_j (z_pred_j^2 - 2 z_pred_j z_j).
ad::Var denoiser_loss(const ad::Var& z_pred, const ad::Var& z);

// Mean negative log-softmax probability of the true class (index into the
// logit columns, i.e. element token - 1).
ad::Var species_loss(const ad::Var& logits, const std::vector<std::size_t>& target_class);

struct AntitheticPair {
  std::vector<double> plus, minus;
};

// x+- = alpha x0 + beta x1 +- gamma z
AntitheticPair antithetic_pair(const InterpolantSpec& spec, std::span<const double> x0, std::span<const double> x1,
                               std::span<const double> z, double t);

// Which loss terms a run carries.
struct LossTerms {
  bool coord_velocity = true;
  bool coord_denoiser = false;
  bool lattice_velocity = true;
  bool lattice_denoiser = false;
  bool species = false;
};

// Relative weights; the lattice-velocity weight is the fixed reference 1.
struct LossWeights {
  double coord_velocity = 1.0;
  double coord_denoiser = 1.0;
  double lattice_denoiser = 1.0;
  double species = 1.0;

  bool operator==(const LossWeights&) const = default;
};

// Weights of the active terms rescaled to sum to one.
struct NormalizedWeights {
  double coord_velocity = 0, coord_denoiser = 0, lattice_velocity = 0, lattice_denoiser = 0, species = 0;
};

NormalizedWeights normalize_weights(const LossWeights& w, const LossTerms& active);

struct LossParts {
  std::optional<ad::Var> coord_velocity, coord_denoiser, lattice_velocity, lattice_denoiser, species;
};

// Weighted sum of the active parts; throws if an active part is missing.
ad::Var total_loss(const LossParts& parts, const LossWeights& weights, const LossTerms& active);

}  // namespace crysi
