#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crysi/autodiff.hpp"
#include "crysi/coupling.hpp"
#include "crysi/interpolants.hpp"
#include "crysi/losses.hpp"
#include "crysi/network.hpp"
#include "crysi/rng.hpp"
#include "crysi/sampling.hpp"
#include "crysi/structure.hpp"

namespace crysi {

struct TrainConfig {
  Task task = Task::Csp;
  int epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Cosine decay of the learning rate over the epochs down to lr * lr_floor.
  bool cosine_decay = false;
  double lr_floor = 0.05;
  // Rescale each batch gradient to at most this global L2 norm; 0 disables.
  double grad_clip = 0.0;
  LossWeights weights;
  InterpolantSpec coords;
  InterpolantSpec lattice;
  bool coupling = false;    // min-permutation coupling of x0 to x1
  bool antithetic = true;   // +-gamma z pairs whenever a latent term is present
  // Shift each target structure by a random global fractional translation.
  bool random_translation = false;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

void check_train_config(const TrainConfig& cfg, const NetworkConfig& net);

// Loss terms a configuration trains.
LossTerms active_terms(const TrainConfig& cfg, const NetworkConfig& net);

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loss of one batch recorded on `tape`. Draws t, x0, z (and masked species for
// DNG/CFP) from rng.
struct BatchLoss {
  ad::Var total;
  LossParts parts;
};

BatchLoss batch_loss(ad::Tape& tape, const ModelParams& params, const BoundParams& bound,
                     std::span<const Structure> batch, const TrainConfig& cfg, const BaseDistributionSpec& base,
                     Rng& rng);

// Adaptive moment estimation with decoupled weight decay.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

AdamState init_adam(const ModelParams& params);
void clip_gradients(std::vector<std::vector<double>>& grads, double max_norm);
void adam_update(ModelParams& params, AdamState& state, const std::vector<std::vector<double>>& grads,
                 const TrainConfig& cfg);

struct TermTotals {
  double total = 0, coord_velocity = 0, coord_denoiser = 0, lattice_velocity = 0, lattice_denoiser = 0, species = 0;
};

struct EpochResult {
  TermTotals mean;                 // batch means of each term
  std::vector<double> batch_loss;  // total loss per batch
};

EpochResult train_epoch(ModelParams& params, AdamState& adam, const std::vector<Structure>& data,
                        const TrainConfig& cfg, const BaseDistributionSpec& base, Rng& rng);

// Mean loss over the set with a fixed random stream, without updates.
TermTotals evaluate_loss(const ModelParams& params, const std::vector<Structure>& data, const TrainConfig& cfg,
                         const BaseDistributionSpec& base, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  TermTotals train;
  double val_total = 0;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  double best_val = 0;
  std::vector<EpochLog> log;
};

// Fixed number of epochs; keeps the parameters with the lowest validation loss
// (training loss when the validation set is empty).
TrainResult train(ModelParams params, const std::vector<Structure>& train_set, const std::vector<Structure>& val_set,
                  const TrainConfig& cfg, const BaseDistributionSpec& base,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

std::string loss_log_csv(const std::vector<EpochLog>& log);

// One-dimensional Gaussian check of the interpolant marginals:
// rho0 = N(0, 1), rho1 = N(m, sigma^2), x_t = alpha x0 + beta x1 + gamma z.
struct ClosedFormReport {
  double mean = 0, var = 0;
  double expected_mean = 0, expected_var = 0;
  double se_mean = 0, se_var = 0;
  bool ok = false;  // both moments within 3 standard errors
};

ClosedFormReport closed_form_sanity(const InterpolantSpec& spec, double t, double m, double sigma, std::size_t n,
                                    std::uint64_t seed);

}  // namespace crysi
