#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crysi/interpolants.hpp"
#include "crysi/structure.hpp"

namespace crysi {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

using TauFn = std::function<double(const InterpolantSpec&, double)>;

CheckResult check_boundary_identities(std::uint64_t seed);
CheckResult check_encdec_generalization();
// tau defaults to vp_tau; the check suite swaps in a corrupted schedule to
// prove the check can fail.
CheckResult check_vp_schedule(const TauFn& tau = {});
CheckResult check_periodic_geodesic(std::uint64_t seed);
CheckResult check_velocity_fd(std::uint64_t seed);
CheckResult check_gradients(std::uint64_t seed);
CheckResult check_closed_form(std::uint64_t seed);
CheckResult check_coupling_exhaustive(std::uint64_t seed);
CheckResult check_dfm_oracle(std::uint64_t seed);
CheckResult check_antithetic(std::uint64_t seed);
CheckResult check_integrators(std::uint64_t seed);
CheckResult check_ou_moments(std::uint64_t seed);
CheckResult check_metrics_self_consistency(std::uint64_t seed);

// tau_cos with a wrong phase constant.
double corrupted_vp_tau(const InterpolantSpec& spec, double t);

struct CheckOptions {
  std::uint64_t seed = 20240611;
  // Replace the cosine VP schedule by corrupted_vp_tau.
  bool corrupt_vp_cos = false;
};

// Criteria 1-13 in order.
std::vector<CheckResult> run_checks(const CheckOptions& opt = {});

// End-to-end runs. Budgets are wall-clock seconds for the training phase.
struct EndToEndOptions {
  std::uint64_t seed = 1;
  std::size_t n_structures = 2000;
  int epochs = -1;  // -1: the tuned default of each run
  double train_budget = 600.0;
  std::function<void(const std::string&)> progress;
};

// Criterion 14: CSP on the perovskite toy, match rate on the held-out split.
CheckResult run_csp_end_to_end(const EndToEndOptions& opt);
// Criterion 15: DNG on the torus mixture toy, W1 of pair-displacement marginals.
CheckResult run_dng_end_to_end(const EndToEndOptions& opt);

// |dx|, |dy|, |dz| of the nearest-image displacement of every atom pair.
std::vector<double> pair_displacement_marginal(const std::vector<Structure>& set, int axis);

std::string format_result(const CheckResult& r);

}  // namespace crysi
