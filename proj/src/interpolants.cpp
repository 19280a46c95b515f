#include "crysi/interpolants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "crysi/structure.hpp"

namespace crysi {

namespace {

constexpr double kPi = std::numbers::pi;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolant time " + std::to_string(t) + " outside [0,1]");
}

void check_sizes(std::span<const double> x0, std::span<const double> x1, std::span<const double> z) {
  if (x0.size() != x1.size() || x0.size() != z.size()) {
    throw std::invalid_argument("interpolant operands differ in size: " + std::to_string(x0.size()) + ", " +
                                std::to_string(x1.size()) + ", " + std::to_string(z.size()));
  }
}

// Phase of the encoder-decoder schedule: runs from 0 at t = 0 through pi/2 at
// the switch time to pi at t = 1.
struct Phase {
  double u, du;
};

Phase enc_dec_phase(double t, double t_switch, double p) {
  const double n = std::pow(t * (1.0 - t_switch), p);
  const double d = std::pow(t_switch * (1.0 - t), p);
  const double s = n + d;
  const double u = kPi * n / s;
  // Derivatives of n and d; callers keep t away from the endpoints when p < 1.
  const double dn = t > 0.0 ? p * std::pow(1.0 - t_switch, p) * std::pow(t, p - 1.0) : (p == 1.0 ? 1.0 - t_switch : 0.0);
  const double dd =
      t < 1.0 ? -p * std::pow(t_switch, p) * std::pow(1.0 - t, p - 1.0) : (p == 1.0 ? -t_switch : 0.0);
  const double du = kPi * (dn * d - n * dd) / (s * s);
  return {u, du};
}

double derivative_time(const InterpolantSpec& spec, double t) {
  if (!endpoint_singular(spec)) return t;
  return std::clamp(t, spec.time_clamp, 1.0 - spec.time_clamp);
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Linear: return "linear";
    case Family::Trig: return "trig";
    case Family::EncDec: return "enc_dec";
    case Family::VpSbd: return "vp_sbd";
    case Family::VeSbd: return "ve_sbd";
  }
  return "?";
}

std::string to_string(GammaKind g) {
  switch (g) {
    case GammaKind::None: return "none";
    case GammaKind::LatentSqrt: return "latent_sqrt";
    case GammaKind::EncDecGamma: return "enc_dec_gamma";
  }
  return "?";
}

std::string to_string(VpSchedule s) {
  switch (s) {
    case VpSchedule::Const: return "const";
    case VpSchedule::Linear: return "linear";
    case VpSchedule::Cosine: return "cosine";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (auto f : {Family::Linear, Family::Trig, Family::EncDec, Family::VpSbd, Family::VeSbd})
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown interpolant family '" + s + "'");
}

GammaKind parse_gamma_kind(const std::string& s) {
  for (auto g : {GammaKind::None, GammaKind::LatentSqrt, GammaKind::EncDecGamma})
    if (to_string(g) == s) return g;
  throw std::invalid_argument("unknown gamma kind '" + s + "'");
}

VpSchedule parse_schedule(const std::string& s) {
  for (auto v : {VpSchedule::Const, VpSchedule::Linear, VpSchedule::Cosine})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown VP schedule '" + s + "'");
}

void check_parameters(const InterpolantSpec& spec) {
  const bool sbd = spec.family == Family::VpSbd || spec.family == Family::VeSbd;
  if (sbd && spec.gamma_kind != GammaKind::None) {
    throw std::invalid_argument(to_string(spec.family) + " carries no latent term; gamma_kind must be none");
  }
  if (spec.family == Family::EncDec && spec.gamma_kind != GammaKind::EncDecGamma) {
    throw std::invalid_argument("enc_dec family requires gamma_kind = enc_dec_gamma");
  }
  const bool uses_enc_dec = spec.family == Family::EncDec || spec.gamma_kind == GammaKind::EncDecGamma;
  if (uses_enc_dec) {
    if (!(spec.t_switch > 0.0 && spec.t_switch < 1.0)) {
      throw std::invalid_argument("enc_dec switch time " + std::to_string(spec.t_switch) + " outside (0,1)");
    }
    if (!(spec.p >= 0.5)) throw std::invalid_argument("enc_dec exponent p must be >= 1/2");
  }
  if (spec.gamma_kind != GammaKind::None && !(spec.a > 0.0)) {
    throw std::invalid_argument("latent scale a must be positive");
  }
  if (sbd && !(spec.sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  if (spec.family == Family::VpSbd) {
    if (!(spec.beta_min >= 0.0 && spec.beta_max >= spec.beta_min)) {
      throw std::invalid_argument("VP schedule requires 0 <= beta_min <= beta_max");
    }
    if (!(spec.cos_offset >= 0.0)) throw std::invalid_argument("cosine offset must be nonnegative");
  }
  if (spec.family == Family::VeSbd && !(spec.sigma_min > 0.0 && spec.sigma_max > spec.sigma_min)) {
    throw std::invalid_argument("VE schedule requires 0 < sigma_min < sigma_max");
  }
  if (!(spec.time_clamp >= 0.0 && spec.time_clamp < 0.5)) throw std::invalid_argument("time clamp outside [0,0.5)");
}

bool endpoint_singular(const InterpolantSpec& spec) {
  if (spec.gamma_kind == GammaKind::LatentSqrt) return true;
  if ((spec.family == Family::EncDec || spec.gamma_kind == GammaKind::EncDecGamma) && spec.p < 1.0) return true;
  return spec.family == Family::VpSbd || spec.family == Family::VeSbd;
}

double vp_tau(const InterpolantSpec& spec, double t) {
  check_time(t);
  switch (spec.schedule) {
    case VpSchedule::Const:
      return t;
    case VpSchedule::Linear: {
      if (t == 0.0) return 0.0;
      const double lt = std::log(t);
      return std::exp(0.5 * spec.beta_min * lt - 0.25 * (spec.beta_max - spec.beta_min) * lt * lt);
    }
    case VpSchedule::Cosine: {
      if (t < std::exp(-1.0)) return 0.0;
      const double c = kPi / (2.0 + 2.0 * spec.cos_offset);
      return std::sin(c * (1.0 + std::log(t))) / std::sin(c);
    }
  }
  return 0.0;
}

double vp_tau_derivative(const InterpolantSpec& spec, double t) {
  check_time(t);
  switch (spec.schedule) {
    case VpSchedule::Const:
      return 1.0;
    case VpSchedule::Linear: {
      if (t == 0.0) return 0.0;
      const double lt = std::log(t);
      return vp_tau(spec, t) * (0.5 * spec.beta_min - 0.5 * (spec.beta_max - spec.beta_min) * lt) / t;
    }
    case VpSchedule::Cosine: {
      if (t < std::exp(-1.0)) return 0.0;
      const double c = kPi / (2.0 + 2.0 * spec.cos_offset);
      return std::cos(c * (1.0 + std::log(t))) * c / (t * std::sin(c));
    }
  }
  return 0.0;
}

Coefficients coefficients(const InterpolantSpec& spec, double t) {
  check_time(t);
  const double td = derivative_time(spec, t);
  Coefficients c;
  switch (spec.family) {
    case Family::Linear:
      c.alpha = 1.0 - t;
      c.beta = t;
      c.dalpha = -1.0;
      c.dbeta = 1.0;
      break;
    case Family::Trig:
      c.alpha = std::cos(0.5 * kPi * t);
      c.beta = std::sin(0.5 * kPi * t);
      c.dalpha = -0.5 * kPi * std::sin(0.5 * kPi * td);
      c.dbeta = 0.5 * kPi * std::cos(0.5 * kPi * td);
      break;
    case Family::EncDec: {
      const Phase ph = enc_dec_phase(t, spec.t_switch, spec.p);
      const Phase phd = enc_dec_phase(td, spec.t_switch, spec.p);
      const double cos2 = std::cos(ph.u) * std::cos(ph.u);
      const double dcos2 = -std::sin(2.0 * phd.u) * phd.du;
      if (t < spec.t_switch) {
        c.alpha = cos2;
      } else if (t > spec.t_switch) {
        c.beta = cos2;
      }
      if (td < spec.t_switch) {
        c.dalpha = dcos2;
      } else if (td > spec.t_switch) {
        c.dbeta = dcos2;
      }
      break;
    }
    case Family::VpSbd: {
      const double tau = vp_tau(spec, t);
      c.alpha = std::sqrt(std::max(0.0, 1.0 - tau * tau));
      c.beta = tau;
      const double taud = vp_tau(spec, td);
      const double dtau = vp_tau_derivative(spec, td);
      c.dbeta = dtau;
      c.dalpha = -taud * dtau / std::sqrt(1.0 - taud * taud);
      break;
    }
    case Family::VeSbd: {
      const double smin2 = spec.sigma_min * spec.sigma_min;
      const double log_ratio = std::log(spec.sigma_max / spec.sigma_min);
      auto sigma2 = [&](double s) { return smin2 * std::exp(2.0 * s * log_ratio); };
      c.alpha = std::sqrt(std::max(0.0, sigma2(1.0 - t) - smin2));
      c.beta = 1.0;
      const double ad = std::sqrt(std::max(0.0, sigma2(1.0 - td) - smin2));
      c.dalpha = -sigma2(1.0 - td) * log_ratio / ad;
      c.dbeta = 0.0;
      break;
    }
  }
  switch (spec.gamma_kind) {
    case GammaKind::None:
      break;
    case GammaKind::LatentSqrt: {
      c.gamma = std::sqrt(spec.a * t * (1.0 - t));
      const double gd = std::sqrt(spec.a * td * (1.0 - td));
      c.dgamma = spec.a * (1.0 - 2.0 * td) / (2.0 * gd);
      break;
    }
    case GammaKind::EncDecGamma: {
      const Phase ph = enc_dec_phase(t, spec.t_switch, spec.p);
      const Phase phd = enc_dec_phase(td, spec.t_switch, spec.p);
      const double sa = std::sqrt(spec.a);
      const double s = std::sin(ph.u);
      c.gamma = sa * s * s;
      c.dgamma = sa * std::sin(2.0 * phd.u) * phd.du;
      // sin(pi) is not exactly zero in floating point.
      if (t == 1.0) c.gamma = 0.0;
      break;
    }
  }
  return c;
}

std::vector<double> interpolate(const InterpolantSpec& spec, std::span<const double> x0, std::span<const double> x1,
                                std::span<const double> z, double t) {
  check_sizes(x0, x1, z);
  const Coefficients c = coefficients(spec, t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.alpha * x0[i] + c.beta * x1[i] + c.gamma * z[i];
  return out;
}

std::vector<double> interpolant_velocity(const InterpolantSpec& spec, std::span<const double> x0,
                                         std::span<const double> x1, std::span<const double> z, double t) {
  check_sizes(x0, x1, z);
  const Coefficients c = coefficients(spec, t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.dalpha * x0[i] + c.dbeta * x1[i] + c.dgamma * z[i];
  return out;
}

namespace {

std::vector<double> unwrap_all(std::span<const double> x0, std::span<const double> x1) {
  std::vector<double> u(x1.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = nearest_image_unwrap(x0[i], x1[i]);
  return u;
}

}  // namespace

std::vector<double> periodic_interpolate(const InterpolantSpec& spec, std::span<const double> x0,
                                         std::span<const double> x1, std::span<const double> z, double t) {
  check_sizes(x0, x1, z);
  const auto x1u = unwrap_all(x0, x1);
  auto out = interpolate(spec, x0, x1u, z, t);
  for (auto& v : out) v = wrap(v);
  return out;
}

std::vector<double> periodic_velocity(const InterpolantSpec& spec, std::span<const double> x0,
                                      std::span<const double> x1, std::span<const double> z, double t) {
  check_sizes(x0, x1, z);
  const auto x1u = unwrap_all(x0, x1);
  return interpolant_velocity(spec, x0, x1u, z, t);
}

ValidationReport validate_coefficients(const CoefficientFn& fn, bool gamma_required, double tol) {
  const Coefficients c0 = fn(0.0);
  const Coefficients c1 = fn(1.0);
  auto fail = [](std::string what) { return ValidationReport{false, std::move(what)}; };
  if (std::abs(c0.alpha - 1.0) > tol) return fail("alpha(0)!=1");
  if (std::abs(c1.beta - 1.0) > tol) return fail("beta(1)!=1");
  if (std::abs(c1.alpha) > tol) return fail("alpha(1)!=0");
  if (std::abs(c0.beta) > tol) return fail("beta(0)!=0");
  if (std::abs(c0.gamma) > tol) return fail("gamma(0)!=0");
  if (std::abs(c1.gamma) > tol) return fail("gamma(1)!=0");
  if (gamma_required) {
    for (int k = 1; k <= 999; ++k) {
      const double t = k / 1000.0;
      if (!(fn(t).gamma > 0.0)) return fail("gamma(" + std::to_string(t) + ")<=0");
    }
  }
  return {};
}

ValidationReport validate(const InterpolantSpec& spec) {
  try {
    check_parameters(spec);
  } catch (const std::invalid_argument& e) {
    return {false, e.what()};
  }
  auto fn = [&spec](double t) { return coefficients(spec, t); };
  if (spec.family == Family::VeSbd) {
    const Coefficients c1 = fn(1.0);
    if (std::abs(c1.alpha) > 1e-12) return {false, "alpha(1)!=0"};
    for (int k = 0; k <= 1000; ++k) {
      const Coefficients c = fn(k / 1000.0);
      if (c.beta != 1.0) return {false, "beta!=1"};
      if (c.gamma != 0.0) return {false, "gamma!=0"};
    }
    return {};
  }
  return validate_coefficients(fn, spec.gamma_kind != GammaKind::None);
}

}  // namespace crysi
