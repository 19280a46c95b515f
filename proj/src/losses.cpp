#include "crysi/losses.hpp"

#include <stdexcept>

namespace crysi {

namespace {

ad::Var quadratic_cross(const ad::Var& pred, const ad::Var& target, const char* name) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + ad::to_string(pred.shape()) + " vs " +
                                ad::to_string(target.shape()));
  }
  // |p|^2 - 2 p.v, summed per row and averaged over rows.
  ad::Var per_elem = ad::sub(ad::square(pred), ad::scale(ad::mul(pred, target), 2.0));
  return ad::scale(ad::sum(per_elem), 1.0 / static_cast<double>(pred.rows()));
}

}  // namespace

ad::Var velocity_loss(const ad::Var& b_pred, const ad::Var& target) {
  return quadratic_cross(b_pred, target, "velocity_loss");
}

ad::Var denoiser_loss(const ad::Var& z_pred, const ad::Var& z) { return quadratic_cross(z_pred, z, "denoiser_loss"); }

ad::Var species_loss(const ad::Var& logits, const std::vector<std::size_t>& target_class) {
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(logits), target_class)), -1.0);
}

AntitheticPair antithetic_pair(const InterpolantSpec& spec, std::span<const double> x0, std::span<const double> x1,
                               std::span<const double> z, double t) {
  if (x0.size() != x1.size() || x0.size() != z.size()) throw std::invalid_argument("antithetic_pair: size mismatch");
  const Coefficients c = coefficients(spec, t);
  AntitheticPair p;
  p.plus.resize(x0.size());
  p.minus.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double mean = c.alpha * x0[i] + c.beta * x1[i];
    p.plus[i] = mean + c.gamma * z[i];
    p.minus[i] = mean - c.gamma * z[i];
  }
  return p;
}

NormalizedWeights normalize_weights(const LossWeights& w, const LossTerms& active) {
  for (double v : {w.coord_velocity, w.coord_denoiser, w.lattice_denoiser, w.species})
    if (!(v > 0.0)) throw std::invalid_argument("relative loss weights must be positive");
  NormalizedWeights n;
  double total = 0.0;
  if (active.coord_velocity) total += (n.coord_velocity = w.coord_velocity);
  if (active.coord_denoiser) total += (n.coord_denoiser = w.coord_denoiser);
  if (active.lattice_velocity) total += (n.lattice_velocity = 1.0);
  if (active.lattice_denoiser) total += (n.lattice_denoiser = w.lattice_denoiser);
  if (active.species) total += (n.species = w.species);
  if (total <= 0.0) throw std::invalid_argument("no active loss terms");
  n.coord_velocity /= total;
  n.coord_denoiser /= total;
  n.lattice_velocity /= total;
  n.lattice_denoiser /= total;
  n.species /= total;
  return n;
}

ad::Var total_loss(const LossParts& parts, const LossWeights& weights, const LossTerms& active) {
  const NormalizedWeights n = normalize_weights(weights, active);
  std::optional<ad::Var> acc;
  auto add_term = [&](bool on, const std::optional<ad::Var>& part, double lambda, const char* name) {
    if (!on) return;
    if (!part) throw std::invalid_argument(std::string("total_loss: missing required part '") + name + "'");
    ad::Var term = ad::scale(*part, lambda);
    acc = acc ? ad::add(*acc, term) : term;
  };
  add_term(active.coord_velocity, parts.coord_velocity, n.coord_velocity, "coord_velocity");
  add_term(active.coord_denoiser, parts.coord_denoiser, n.coord_denoiser, "coord_denoiser");
  add_term(active.lattice_velocity, parts.lattice_velocity, n.lattice_velocity, "lattice_velocity");
  add_term(active.lattice_denoiser, parts.lattice_denoiser, n.lattice_denoiser, "lattice_denoiser");
  add_term(active.species, parts.species, n.species, "species");
  return *acc;
}

}  // namespace crysi
