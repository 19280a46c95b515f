#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crysi {

enum class Family { Linear, Trig, EncDec, VpSbd, VeSbd };
enum class GammaKind { None, LatentSqrt, EncDecGamma };
enum class VpSchedule { Const, Linear, Cosine };

std::string to_string(Family f);
std::string to_string(GammaKind g);
std::string to_string(VpSchedule s);
Family parse_family(const std::string& s);
GammaKind parse_gamma_kind(const std::string& s);
VpSchedule parse_schedule(const std::string& s);

// Times closer than this to 0 or 1 are clamped wherever a time derivative of
// the coefficients diverges at the endpoint.
inline constexpr double kDefaultTimeClamp = 1e-5;

struct InterpolantSpec {
  Family family = Family::Linear;
  GammaKind gamma_kind = GammaKind::None;
  double a = 1.0;         // latent scale (gamma) or enc-dec variance
  double t_switch = 0.5;  // enc-dec switch time
  double p = 1.0;         // enc-dec exponent, 0.5 or 1
  double sigma0 = 1.0;    // Gaussian base width for the SBD families
  VpSchedule schedule = VpSchedule::Const;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double cos_offset = 0.008;
  double sigma_min = 0.01;  // VE schedule
  double sigma_max = 1.0;
  double time_clamp = kDefaultTimeClamp;

  bool operator==(const InterpolantSpec&) const = default;
};

struct Coefficients {
  double alpha = 0, beta = 0, gamma = 0;
  double dalpha = 0, dbeta = 0, dgamma = 0;
};

// Throws std::invalid_argument for inconsistent parameters (e.g. enc-dec
// switch time outside (0,1), SBD family combined with a latent gamma).
void check_parameters(const InterpolantSpec& spec);

// True when some coefficient derivative diverges at t = 0 or t = 1.
bool endpoint_singular(const InterpolantSpec& spec);

// alpha/beta/gamma at t; derivatives at t, or at the clamped time when the
// family is endpoint-singular.
Coefficients coefficients(const InterpolantSpec& spec, double t);

// One-sided variance-preserving time change; tau(0) = 0 and tau(1) = 1.
double vp_tau(const InterpolantSpec& spec, double t);
double vp_tau_derivative(const InterpolantSpec& spec, double t);

// x_t = alpha x0 + beta x1 + gamma z, elementwise.
std::vector<double> interpolate(const InterpolantSpec& spec, std::span<const double> x0, std::span<const double> x1,
                                std::span<const double> z, double t);
// d/dt x_t = alpha' x0 + beta' x1 + gamma' z.
std::vector<double> interpolant_velocity(const InterpolantSpec& spec, std::span<const double> x0,
                                         std::span<const double> x1, std::span<const double> z, double t);

// Fractional coordinates on the unit torus: x1 is first unwrapped to the image
// nearest x0, the path is evaluated in the unwrapped space, then wrapped.
std::vector<double> periodic_interpolate(const InterpolantSpec& spec, std::span<const double> x0,
                                         std::span<const double> x1, std::span<const double> z, double t);
// Velocity of the unwrapped path (not wrapped).
std::vector<double> periodic_velocity(const InterpolantSpec& spec, std::span<const double> x0,
                                      std::span<const double> x1, std::span<const double> z, double t);

// Boundary-condition checks. For two-sided families: alpha(0) = beta(1) = 1,
// alpha(1) = beta(0) = gamma(0) = gamma(1) = 0, and gamma > 0 on 999 interior
// points when a latent term is required. The VE family is one-sided
// (beta = 1 throughout), so only alpha(1) = 0, beta(1) = 1 and gamma = 0 apply.
struct ValidationReport {
  bool ok = true;
  std::string violation;
};

using CoefficientFn = std::function<Coefficients(double)>;

ValidationReport validate(const InterpolantSpec& spec);
ValidationReport validate_coefficients(const CoefficientFn& fn, bool gamma_required, double tol = 1e-12);

}  // namespace crysi
