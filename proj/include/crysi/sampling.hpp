#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crysi/coupling.hpp"
#include "crysi/dfm.hpp"
#include "crysi/interpolants.hpp"
#include "crysi/network.hpp"
#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

namespace crysi {

enum class Scheme { Ode, Sde };
enum class Task { Csp, Dng, Cfp };

std::string to_string(Scheme s);
std::string to_string(Task t);
Scheme parse_scheme(const std::string& s);
Task parse_task(const std::string& s);

// Vanishing noise scale c / [(1 + e^{-(t-mu)/sigma}) (1 + e^{-(1-mu-t)/sigma})].
struct EpsilonParams {
  double c = 0.0;
  double mu = 0.2;
  double sigma = 0.02;

  bool operator==(const EpsilonParams&) const = default;
};

struct GroupGeneration {
  Scheme scheme = Scheme::Ode;
  EpsilonParams eps;
  double anneal = 0.0;  // velocity annealing slope s

  bool operator==(const GroupGeneration&) const = default;
};

struct GenerationConfig {
  GroupGeneration coords;
  GroupGeneration lattice;
  int steps = 100;
  RateOptions species;  // DFM stochasticity and rate conventions
  // Noise term is sqrt(diffusion_prefactor * eps * dt) * xi.
  double diffusion_prefactor = 2.0;
  std::uint64_t seed = 0;

  bool operator==(const GenerationConfig&) const = default;
};

void check_generation_config(const GenerationConfig& cfg);

double epsilon_vanish(double c, double mu, double sigma, double t);
double epsilon_vanish(const EpsilonParams& p, double t);

// (1 + s t) b
double anneal(double b, double s, double t);

// Forward Euler x + b dt; with `periodic` the result is wrapped into [0, 1).
std::vector<double> ode_step(std::span<const double> x, std::span<const double> b, double dt, bool periodic);

// Euler-Maruyama with drift b - (eps / gamma) z and noise sqrt(k eps dt) xi,
// k = diffusion_prefactor. eps = 0 takes exactly the ode_step path.
std::vector<double> sde_step(std::span<const double> x, std::span<const double> b, std::span<const double> z,
                             double gamma, double eps, double dt, Rng& rng, bool periodic,
                             double diffusion_prefactor = 2.0);

// Everything a generation run needs besides the generation settings.
struct GenerativeModel {
  ModelParams params;
  InterpolantSpec coords;
  InterpolantSpec lattice;
  BaseDistributionSpec base;
};

// Rejects combinations that cannot be integrated: an SDE group whose
// interpolant has no latent term (gamma > 0 is required for SDE sampling) or a
// network without denoiser heads.
void check_compatible(const GenerativeModel& model, const GenerationConfig& cfg);

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TrajectoryFn = std::function<void(std::size_t index, double t, const Structure& state)>;

struct GenerationResult {
  std::vector<Structure> structures;
  std::vector<std::size_t> source_index;  // input index of each output
  std::vector<std::string> aborted;       // NaN diagnostics of dropped runs
};

// CSP: one structure per composition, species kept fixed.
// DNG: one structure per atom count, species generated from all-MASK.
// Structures integrate jointly on the grid t_k = k / steps. Structure i uses
// the i-th child stream of Rng(cfg.seed), so results do not depend on the
// thread count.
GenerationResult generate_csp(const GenerativeModel& model, const GenerationConfig& cfg,
                              const std::vector<std::vector<int>>& compositions, const TrajectoryFn& trajectory = {},
                              int threads = 1);
GenerationResult generate_dng(const GenerativeModel& model, const GenerationConfig& cfg,
                              const std::vector<std::size_t>& atom_counts, const TrajectoryFn& trajectory = {},
                              int threads = 1);

// Draws n atom counts from an empirical histogram.
std::vector<std::size_t> sample_atom_counts(const std::map<std::size_t, std::size_t>& histogram, std::size_t n,
                                            Rng& rng);

}  // namespace crysi
