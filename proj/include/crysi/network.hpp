#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crysi/autodiff.hpp"
#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

namespace crysi {

struct NetworkConfig {
  int n_real = kDefaultElements;  // species logits per atom
  int layers = 2;                 // message-passing rounds
  int hidden = 64;
  int embed = 16;
  int fourier = 8;     // frequencies of the pair embedding
  int time_freqs = 8;  // frequencies of the time embedding
  bool denoisers = false;
  // Composition-only model: messages see neither the lattice nor coordinates.
  bool composition_only = false;
  // Lattice entries are divided by this before entering the messages.
  double lattice_scale = 1.0;

  bool operator==(const NetworkConfig&) const = default;
};

void check_network_config(const NetworkConfig& cfg);

struct NamedTensor {
  std::string name;
  ad::Tensor value;
};

struct ModelParams {
  NetworkConfig config;
  std::vector<NamedTensor> tensors;

  const ad::Tensor& get(const std::string& name) const;
  std::size_t count() const;
};

// Weights and biases uniform in +-1/sqrt(fan_in).
ModelParams init_params(const NetworkConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Featurisation

// [t, sin(pi k t), cos(pi k t)] for k = 1..n_freqs.
std::vector<double> time_features(double t, int n_freqs);
// [sin(2 pi k dx_d), cos(2 pi k dx_d)] for k = 1..K and each axis d.
std::vector<double> pair_features(const Vec3& dx, int n_freqs);

struct Features {
  ad::Tensor node;     // N x (embed + time)
  ad::Tensor pair;     // N(N-1) x 6K, ordered (i, j) with j != i
  ad::Tensor lattice;  // 1 x 9
  std::vector<std::size_t> pair_src, pair_dst;
};

Features featurize(const ModelParams& params, const Structure& s, double t);

// ---------------------------------------------------------------------------
// Forward pass

struct BoundParams {
  std::map<std::string, ad::Var> vars;
  const ad::Var& operator[](const std::string& name) const { return vars.at(name); }
};

BoundParams bind(ad::Tape& tape, const ModelParams& params);

struct NetworkOutput {
  ad::Var b_x;     // atoms x 3
  ad::Var b_l;     // structures x 9
  ad::Var z_x;     // atoms x 3 (denoisers only)
  ad::Var z_l;     // structures x 9 (denoisers only)
  ad::Var logits;  // atoms x n_real
  std::vector<std::size_t> first_atom;  // offset of each structure's atoms
};

// Batched forward pass; atoms of all structures are stacked in order.
NetworkOutput forward(ad::Tape& tape, const ModelParams& params, const BoundParams& bound,
                      std::span<const Structure> batch, std::span<const double> times);

// Plain-value outputs for one structure.
struct Prediction {
  std::vector<Vec3> b_x, z_x;
  Mat3 b_l{}, z_l{};
  std::vector<double> logits;  // N x n_real
};

std::vector<Prediction> predict(const ModelParams& params, std::span<const Structure> batch,
                                std::span<const double> times);
Prediction predict(const ModelParams& params, const Structure& s, double t);

// Subtracts the per-structure mean from N x 3 velocities.
std::vector<Vec3> remove_com(std::span<const Vec3> velocities);

// ---------------------------------------------------------------------------
// Checkpoints: JSON with config, a shape manifest and full-precision weights.

nlohmann::json network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json checkpoint_to_json(const ModelParams& params, const nlohmann::json& metadata);
ModelParams checkpoint_from_json(const nlohmann::json& j, nlohmann::json* metadata = nullptr);

}  // namespace crysi
