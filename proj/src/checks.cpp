#include "crysi/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crysi/coupling.hpp"
#include "crysi/data.hpp"
#include "crysi/dfm.hpp"
#include "crysi/hungarian.hpp"
#include "crysi/losses.hpp"
#include "crysi/metrics.hpp"
#include "crysi/network.hpp"
#include "crysi/rng.hpp"
#include "crysi/sampling.hpp"
#include "crysi/train.hpp"

namespace crysi {

namespace {

constexpr double kPi = 3.14159265358979323846;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

CheckResult finish(int criterion, std::string name, bool pass, std::string detail, const Timer& timer) {
  return {criterion, std::move(name), pass, std::move(detail), timer.seconds()};
}

InterpolantSpec random_spec(Family f, Rng& rng) {
  InterpolantSpec s;
  s.family = f;
  switch (f) {
    case Family::Linear:
    case Family::Trig:
      s.gamma_kind = rng.uniform() < 0.5 ? GammaKind::None : GammaKind::LatentSqrt;
      s.a = rng.uniform(0.01, 5.0);
      break;
    case Family::EncDec:
      s.gamma_kind = GammaKind::EncDecGamma;
      s.a = rng.uniform(0.1, 5.0);
      s.t_switch = rng.uniform(0.1, 0.9);
      s.p = rng.uniform() < 0.5 ? 0.5 : 1.0;
      break;
    case Family::VpSbd:
      s.schedule = static_cast<VpSchedule>(rng.index(3));
      s.beta_min = rng.uniform(0.05, 1.0);
      s.beta_max = rng.uniform(5.0, 25.0);
      s.cos_offset = rng.uniform(0.001, 0.05);
      break;
    case Family::VeSbd:
      s.sigma_min = rng.uniform(0.005, 0.05);
      s.sigma_max = rng.uniform(0.5, 5.0);
      break;
  }
  return s;
}

constexpr Family kFamilies[] = {Family::Linear, Family::Trig, Family::EncDec, Family::VpSbd, Family::VeSbd};

}  // namespace

// ---------------------------------------------------------------------------

CheckResult check_boundary_identities(std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  double worst = 0.0;
  std::string failure;
  for (Family f : kFamilies)
    for (int k = 0; k < 100; ++k) {
      const InterpolantSpec s = random_spec(f, rng);
      const Coefficients c0 = coefficients(s, 0.0), c1 = coefficients(s, 1.0);
      std::vector<double> errs;
      if (f == Family::VeSbd) {
        errs = {std::abs(c1.alpha), std::abs(c1.beta - 1.0), std::abs(c0.gamma), std::abs(c1.gamma)};
      } else {
        errs = {std::abs(c0.alpha - 1.0), std::abs(c0.beta), std::abs(c1.alpha), std::abs(c1.beta - 1.0),
                std::abs(c0.gamma), std::abs(c1.gamma)};
      }
      worst = std::max(worst, *std::max_element(errs.begin(), errs.end()));
      const ValidationReport rep = validate(s);
      if (!rep.ok && failure.empty()) failure = to_string(f) + ": " + rep.violation;
    }

  // Constructed violators, one per boundary condition.
  auto base = [](double t) {
    Coefficients c;
    c.alpha = 1.0 - t;
    c.beta = t;
    c.gamma = std::sqrt(t * (1.0 - t));
    return c;
  };
  const std::vector<CoefficientFn> violators{
      [&](double t) { auto c = base(t); c.alpha += 0.1 * (1.0 - t); return c; },
      [&](double t) { auto c = base(t); c.beta *= 0.9; return c; },
      [&](double t) { auto c = base(t); c.alpha += 0.05 * t; return c; },
      [&](double t) { auto c = base(t); c.gamma += 0.1 * (1.0 - t); return c; },
      [&](double t) { auto c = base(t); c.gamma = -c.gamma; return c; },
  };
  int rejected = 0;
  for (const auto& v : violators) rejected += !validate_coefficients(v, true).ok;

  const double secs = timer.seconds();
  const bool pass = worst < 1e-10 && failure.empty() && rejected == 5 && secs < 5.0;
  std::string detail = "500 draws, max boundary error " + fmt(worst) + ", violators rejected " +
                       std::to_string(rejected) + "/5, " + fmt(secs) + " s";
  if (!failure.empty()) detail += ", validator rejected a valid spec (" + failure + ")";
  return finish(1, "boundary-identities", pass, detail, timer);
}

CheckResult check_encdec_generalization() {
  Timer timer;
  InterpolantSpec s;
  s.family = Family::EncDec;
  s.gamma_kind = GammaKind::EncDecGamma;
  s.a = 1.0;
  s.p = 1.0;
  s.t_switch = 0.5;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = static_cast<double>(i) / 999.0;
    const Coefficients c = coefficients(s, t);
    const double cos2 = std::cos(kPi * t) * std::cos(kPi * t);
    const double sin2 = std::sin(kPi * t) * std::sin(kPi * t);
    worst = std::max({worst, std::abs(c.alpha - (t < 0.5 ? cos2 : 0.0)), std::abs(c.beta - (t > 0.5 ? cos2 : 0.0)),
                      std::abs(c.gamma - sin2)});
  }
  return finish(2, "encdec-generalization", worst < 1e-10, "1000 grid points, max error " + fmt(worst), timer);
}

double corrupted_vp_tau(const InterpolantSpec& spec, double t) {
  if (spec.schedule != VpSchedule::Cosine) return vp_tau(spec, t);
  if (t < std::exp(-1.0)) return 0.0;
  const double c = kPi / (2.0 + 2.0 * spec.cos_offset);
  return std::sin(c * (1.01 + std::log(t))) / std::sin(c);
}

CheckResult check_vp_schedule(const TauFn& tau_fn) {
  Timer timer;
  const TauFn tau = tau_fn ? tau_fn : TauFn([](const InterpolantSpec& s, double t) { return vp_tau(s, t); });
  InterpolantSpec s;
  s.family = Family::VpSbd;
  double worst_identity = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    const Coefficients c = coefficients(s, t);
    worst_identity = std::max(worst_identity, std::abs(c.alpha * c.alpha + c.beta * c.beta - 1.0));
  }
  InterpolantSpec cs = s, ls = s;
  cs.schedule = VpSchedule::Cosine;
  ls.schedule = VpSchedule::Linear;
  const double cos_at_inv_e = std::abs(tau(cs, std::exp(-1.0)));
  const double cos_at_one = std::abs(tau(cs, 1.0) - 1.0);
  const double lin_at_one = std::abs(tau(ls, 1.0) - 1.0);
  const double at_zero = std::max({std::abs(tau(s, 0.0)), std::abs(tau(cs, 0.0)), std::abs(tau(ls, 0.0))});
  const bool pass = worst_identity < 1e-12 && cos_at_inv_e < 1e-12 && cos_at_one < 1e-12 && lin_at_one < 1e-12 &&
                    at_zero < 1e-12;
  return finish(3, "vp-schedule", pass,
                "|a^2+b^2-1| " + fmt(worst_identity) + ", |tau_cos(1/e)| " + fmt(cos_at_inv_e) + ", |tau_cos(1)-1| " +
                    fmt(cos_at_one) + ", |tau_lin(1)-1| " + fmt(lin_at_one) + ", |tau(0)| " + fmt(at_zero),
                timer);
}

CheckResult check_periodic_geodesic(std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  int mismatches = 0;
  for (int n = 0; n < 10000; ++n) {
    Vec3 x0, x1;
    for (int d = 0; d < 3; ++d) {
      x0[d] = rng.uniform();
      x1[d] = rng.uniform();
    }
    // Brute force: every image shift in {-1, 0, 1} per axis, keeping the
    // in-box image on ties.
    Vec3 image{};
    for (int d = 0; d < 3; ++d) {
      double best = std::abs(x1[d] - x0[d]);
      image[d] = x1[d];
      for (int k : {-1, 1}) {
        const double cand = x1[d] + k;
        if (std::abs(cand - x0[d]) < best) {
          best = std::abs(cand - x0[d]);
          image[d] = cand;
        }
      }
    }
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k)
          best_dist = std::min(best_dist, norm(Vec3{x1[0] + i - x0[0], x1[1] + j - x0[1], x1[2] + k - x0[2]}));
    if (nearest_image_unwrap(x0, x1) != image || torus_distance(x0, x1) != best_dist) ++mismatches;
  }
  return finish(4, "periodic-geodesic", mismatches == 0,
                "10000 pairs, " + std::to_string(mismatches) + " mismatches against image enumeration", timer);
}

CheckResult check_velocity_fd(std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  std::vector<InterpolantSpec> specs;
  InterpolantSpec s;
  s.gamma_kind = GammaKind::LatentSqrt;
  s.a = 0.5;
  specs.push_back(s);  // linear
  s.family = Family::Trig;
  specs.push_back(s);
  s = {};
  s.family = Family::EncDec;
  s.gamma_kind = GammaKind::EncDecGamma;
  s.t_switch = 0.4;
  specs.push_back(s);
  s.p = 0.5;
  specs.push_back(s);
  for (auto sched : {VpSchedule::Const, VpSchedule::Linear, VpSchedule::Cosine}) {
    s = {};
    s.family = Family::VpSbd;
    s.schedule = sched;
    specs.push_back(s);
  }
  s = {};
  s.family = Family::VeSbd;
  specs.push_back(s);

  const double h = 1e-6;
  double worst = 0.0;
  std::string worst_family;
  for (const auto& spec : specs) {
    for (int k = 0; k < 100; ++k) {
      double t = rng.uniform(0.01, 0.99);
      if (spec.family == Family::VpSbd && std::abs(t - std::exp(-1.0)) < 1e-3) t += 2e-3;  // tau_cos kink
      std::vector<double> x0(3), x1(3), z(3);
      for (int d = 0; d < 3; ++d) {
        x0[d] = rng.normal();
        x1[d] = rng.normal();
        z[d] = rng.normal();
      }
      const auto v = interpolant_velocity(spec, x0, x1, z, t);
      const auto up = interpolate(spec, x0, x1, z, t + h), dn = interpolate(spec, x0, x1, z, t - h);
      for (int d = 0; d < 3; ++d) {
        const double fd = (up[d] - dn[d]) / (2.0 * h);
        const double rel = std::abs(fd - v[d]) / std::max(1.0, std::abs(v[d]));
        if (rel > worst) {
          worst = rel;
          worst_family = to_string(spec.family);
        }
      }
    }
  }
  return finish(5, "velocity-finite-differences", worst < 1e-6,
                std::to_string(specs.size()) + " specs x 100 times, max rel error " + fmt(worst) + " (" +
                    worst_family + ")",
                timer);
}

CheckResult check_gradients(std::uint64_t seed) {
  Timer timer;
  NetworkConfig net;
  net.n_real = 5;
  net.layers = 1;
  net.hidden = 6;
  net.embed = 3;
  net.fourier = 1;
  net.time_freqs = 1;
  net.denoisers = true;
  Rng init(seed);
  ModelParams params = init_params(net, init);

  TrainConfig cfg;
  cfg.task = Task::Dng;
  cfg.coords.gamma_kind = GammaKind::LatentSqrt;
  cfg.coords.a = 0.3;
  cfg.lattice.gamma_kind = GammaKind::LatentSqrt;
  cfg.lattice.a = 0.1;
  cfg.coupling = true;
  BaseDistributionSpec base;
  base.log_mean = {std::log(3.0), std::log(3.0), std::log(3.0)};
  base.log_std = {0.1, 0.1, 0.1};

  Structure s;
  s.species = {1, 2, 3};
  s.coords = {{0.1, 0.2, 0.3}, {0.6, 0.4, 0.9}, {0.35, 0.8, 0.55}};
  s.lattice = {Vec3{3.0, 0.0, 0.0}, Vec3{0.2, 3.1, 0.0}, Vec3{0.0, 0.1, 2.9}};
  const std::vector<Structure> batch{s};
  const std::uint64_t loss_seed = seed + 1;

  auto loss_at = [&](const ModelParams& p) {
    ad::Tape tape;
    const BoundParams bp = bind(tape, p);
    Rng rng(loss_seed);
    return batch_loss(tape, p, bp, batch, cfg, base, rng).total.item();
  };

  ad::Tape tape;
  const BoundParams bp = bind(tape, params);
  Rng rng(loss_seed);
  const BatchLoss bl = batch_loss(tape, params, bp, batch, cfg, base, rng);
  tape.backward(bl.total);

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    const std::string& name = params.tensors[k].name;
    const auto& g = bp[name].grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ModelParams p = params;
      p.tensors[k].value.data[i] += h;
      const double up = loss_at(p);
      p.tensors[k].value.data[i] -= 2.0 * h;
      const double dn = loss_at(p);
      const double fd = (up - dn) / (2.0 * h);
      const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = name;
      }
      ++checked;
    }
  }
  return finish(6, "autodiff-gradients", worst < 1e-4,
                std::to_string(checked) + " parameters, max rel error " + fmt(worst) + " (" + worst_name + ")", timer);
}

CheckResult check_closed_form(std::uint64_t seed) {
  Timer timer;
  InterpolantSpec plain;
  InterpolantSpec latent;
  latent.gamma_kind = GammaKind::LatentSqrt;
  latent.a = 0.07;
  struct Case {
    InterpolantSpec spec;
    double t;
  };
  const Case cases[] = {{plain, 0.0}, {plain, 1.0}, {plain, 0.3}, {latent, 0.5}};
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < std::size(cases); ++i) {
    const auto r = closed_form_sanity(cases[i].spec, cases[i].t, 2.0, 1.0, 100000, seed + i);
    pass = pass && r.ok;
    detail << (i ? "; " : "") << "t=" << cases[i].t << " mean " << fmt(r.mean) << "/" << fmt(r.expected_mean)
           << " var " << fmt(r.var) << "/" << fmt(r.expected_var);
    if (i == 3) {
      const bool exact = std::abs(r.expected_mean - 1.0) < 1e-12 && std::abs(r.expected_var - 0.5175) < 1e-12;
      pass = pass && exact;
    }
  }
  return finish(7, "closed-form-marginals", pass, detail.str(), timer);
}

CheckResult check_coupling_exhaustive(std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  int mismatches = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + rng.index(6);
    Structure x1, x0;
    for (std::size_t i = 0; i < n; ++i) {
      x1.species.push_back(1 + static_cast<int>(rng.index(2)));
      x1.coords.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      x0.coords.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    x0.species = x1.species;
    for (std::size_t i = n; i > 1; --i) std::swap(x0.species[i - 1], x0.species[rng.index(i)]);
    if (inst % 4 == 0) std::fill(x0.species.begin(), x0.species.end(), kMask);
    x0.lattice = x1.lattice = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    const CouplingResult res = min_permutation_coupling(x0, x1);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      bool ok = true;
      for (std::size_t j = 0; j < n && ok; ++j)
        ok = x0.species[perm[j]] == kMask || x0.species[perm[j]] == x1.species[j];
      if (ok) best = std::min(best, permutation_cost(x0, x1, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (permutation_cost(x0, x1, res.source_of_target) > best + 1e-12) ++mismatches;
  }
  return finish(8, "coupling-exhaustive", mismatches == 0,
                "1000 instances, N<=6, " + std::to_string(mismatches) + " cost mismatches", timer);
}

CheckResult check_dfm_oracle(std::uint64_t seed) {
  Timer timer;
  const TokenSpace space{3};
  const std::vector<std::vector<double>> target{{0.5, 0.3, 0.2}, {0.1, 0.1, 0.8}, {0.3, 0.4, 0.3}};
  const int chains = 10000, steps = 100;
  const double dt = 1.0 / steps;
  bool pass = true;
  std::ostringstream detail;
  for (double eta : {0.0, 1.0}) {
    Rng rng(seed + static_cast<std::uint64_t>(eta * 10));
    RateOptions opt;
    opt.eta = eta;
    std::vector<std::vector<double>> counts(3, std::vector<double>(3, 0.0));
    std::size_t residual = 0, increases = 0;
    for (int c = 0; c < chains; ++c) {
      std::vector<int> a(3, kMask);
      std::size_t masked = 3;
      for (int k = 0; k < steps; ++k) {
        // Exact posterior: tokens are independent of the masking, so a masked
        // position's posterior is its target marginal; an unmasked one is known.
        std::vector<double> logits;
        for (std::size_t i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            logits.push_back(a[i] == kMask ? std::log(target[i][j]) : (a[i] == j + 1 ? 0.0 : -1e9));
        a = dfm_generation_step(space, logits, a, k * dt, dt, opt, rng);
        const std::size_t now = count_masked(a);
        if (now > masked) ++increases;
        masked = now;
      }
      residual += count_masked(a);
      for (std::size_t i = 0; i < 3; ++i)
        if (a[i] != kMask) counts[i][static_cast<std::size_t>(a[i] - 1)] += 1.0 / chains;
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += std::abs(counts[i][j] - target[i][j]);
      tv = std::max(tv, 0.5 * d);
    }
    pass = pass && tv <= 0.02 && residual == 0 && (eta > 0.0 || increases == 0);
    detail << (eta > 0.0 ? "; " : "") << "eta=" << eta << ": max TV " << fmt(tv) << ", residual MASK " << residual;
    if (eta == 0.0) detail << ", mask-count increases " << increases;
  }
  return finish(9, "dfm-oracle", pass, detail.str(), timer);
}

CheckResult check_antithetic(std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  InterpolantSpec spec;
  spec.gamma_kind = GammaKind::LatentSqrt;
  spec.a = 1.0;

  // Identity: the pair average is the mean interpolant, up to rounding of the
  // two sums (at most one unit in the last place of the larger operand).
  double worst_ulps = 0.0;
  for (int n = 0; n < 10000; ++n) {
    const double t = rng.uniform();
    const std::vector<double> x0{rng.normal()}, x1{rng.normal()}, z{rng.normal()};
    const auto p = antithetic_pair(spec, x0, x1, z, t);
    const Coefficients c = coefficients(spec, t);
    const double mean = c.alpha * x0[0] + c.beta * x1[0];
    const double scale = std::max(std::abs(mean), std::abs(c.gamma * z[0]));
    const double ulp = std::nextafter(scale, INFINITY) - scale;
    worst_ulps = std::max(worst_ulps, std::abs(0.5 * (p.plus[0] + p.minus[0]) - mean) / ulp);
  }

  // Variance of the velocity-loss estimator at t = 0.05 for a fixed smooth
  // model b(x): one antithetic pair against two independent latents.
  const double t = 0.05;
  const Coefficients c = coefficients(spec, t);
  auto model = [](double x) { return std::sin(x) + 0.5 * x; };
  auto loss = [&](double x0, double x1, double z) {
    const double x = c.alpha * x0 + c.beta * x1 + c.gamma * z;
    const double v = c.dalpha * x0 + c.dbeta * x1 + c.dgamma * z;
    const double b = model(x);
    return b * b - 2.0 * v * b;
  };
  double sa = 0, sa2 = 0, si = 0, si2 = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double x0 = rng.normal(), x1 = 2.0 + rng.normal(), z1 = rng.normal(), z2 = rng.normal();
    const double anti = 0.5 * (loss(x0, x1, z1) + loss(x0, x1, -z1));
    const double indep = 0.5 * (loss(x0, x1, z1) + loss(x0, x1, z2));
    sa += anti;
    sa2 += anti * anti;
    si += indep;
    si2 += indep * indep;
  }
  const double var_anti = sa2 / n - (sa / n) * (sa / n);
  const double var_indep = si2 / n - (si / n) * (si / n);
  const bool pass = worst_ulps <= 1.0 && var_anti < var_indep;
  return finish(10, "antithetic", pass,
                "pair-mean deviation " + fmt(worst_ulps) + " ulp; loss variance antithetic " + fmt(var_anti) +
                    " vs independent " + fmt(var_indep),
                timer);
}

CheckResult check_integrators(std::uint64_t seed) {
  Timer timer;
  auto euler_error = [](int steps) {
    std::vector<double> x{1.0};
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) x = ode_step(x, std::vector<double>{-x[0]}, dt, false);
    return std::abs(x[0] - std::exp(-1.0));
  };
  const double ratio = euler_error(100) / euler_error(200);

  // eps = 0 SDE against the ODE, and s = 0 annealing against no annealing.
  Rng rng(seed);
  std::vector<double> xo(16), xs(16), xa(16);
  for (auto& v : xo) v = rng.uniform();
  xs = xa = xo;
  bool sde_equal = true, anneal_equal = true;
  for (int k = 0; k < 50; ++k) {
    const double t = k / 50.0, dt = 1.0 / 50.0;
    std::vector<double> b(16), z(16), ba(16);
    for (std::size_t i = 0; i < 16; ++i) {
      b[i] = std::sin(7.0 * xo[i] + t);
      z[i] = rng.normal();
    }
    const auto o = ode_step(xo, b, dt, true);
    std::vector<double> bs(16);
    for (std::size_t i = 0; i < 16; ++i) bs[i] = std::sin(7.0 * xs[i] + t);
    const auto s = sde_step(xs, bs, z, 0.5, 0.0, dt, rng, true);
    for (std::size_t i = 0; i < 16; ++i) ba[i] = anneal(std::sin(7.0 * xa[i] + t), 0.0, t);
    const auto a = ode_step(xa, ba, dt, true);
    sde_equal = sde_equal && s == o;
    anneal_equal = anneal_equal && a == o;
    xo = o;
    xs = s;
    xa = a;
  }

  // Same contract through full generation with a small random model.
  NetworkConfig net;
  net.n_real = 10;
  net.layers = 1;
  net.hidden = 8;
  net.embed = 4;
  net.fourier = 2;
  net.time_freqs = 2;
  net.denoisers = true;
  Rng init(seed + 1);
  GenerativeModel model{init_params(net, init), {}, {}, {}};
  model.coords.gamma_kind = GammaKind::LatentSqrt;
  model.lattice.gamma_kind = GammaKind::LatentSqrt;
  model.base.log_mean = {1.0, 1.0, 1.0};
  GenerationConfig ode;
  ode.steps = 20;
  ode.seed = seed;
  GenerationConfig sde = ode;
  sde.coords.scheme = sde.lattice.scheme = Scheme::Sde;
  sde.coords.eps.c = sde.lattice.eps.c = 0.0;
  const std::vector<std::vector<int>> comps{{1, 2, 3}, {4, 4}, {5, 6, 7, 8}};
  const bool generation_equal = generate_csp(model, ode, comps).structures == generate_csp(model, sde, comps).structures;

  const bool pass = ratio >= 1.8 && ratio <= 2.2 && sde_equal && anneal_equal && generation_equal;
  return finish(11, "integrators", pass,
                "Euler error ratio " + fmt(ratio) + ", eps=0 SDE bitwise " + (sde_equal && generation_equal ? "equal" : "DIFFERENT") +
                    ", s=0 annealing bitwise " + (anneal_equal ? "equal" : "DIFFERENT"),
                timer);
}

CheckResult check_ou_moments(std::uint64_t seed) {
  Timer timer;
  // dX = -2X dt + sqrt(2 eps) dW from X0 ~ N(0, 1): b = -x and z = gamma x / eps
  // make the SDE drift b - (eps / gamma) z = -2x.
  const std::size_t paths = 100000;
  const int steps = 1000;
  const double eps = 0.5, gamma = 0.8, dt = 1.0 / steps;
  Rng rng(seed);
  std::vector<double> x(paths), b(paths), z(paths);
  for (auto& v : x) v = rng.normal();
  for (int k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i < paths; ++i) {
      b[i] = -x[i];
      z[i] = gamma * x[i] / eps;
    }
    x = sde_step(x, b, z, gamma, eps, dt, rng, false);
  }
  double s = 0, s2 = 0;
  for (double v : x) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(paths);
  const double mean = s / n, var = (s2 - n * mean * mean) / (n - 1.0);
  const double expected = std::exp(-4.0) + 0.5 * eps * (1.0 - std::exp(-4.0));
  const double se = expected * std::sqrt(2.0 / (n - 1.0));
  const double secs = timer.seconds();
  const bool pass = std::abs(var - expected) <= 3.0 * se && secs < 60.0;
  return finish(12, "ou-moments", pass,
                "terminal variance " + fmt(var) + " vs " + fmt(expected) + " (3 SE = " + fmt(3.0 * se) + "), " +
                    fmt(secs) + " s",
                timer);
}

CheckResult check_metrics_self_consistency(std::uint64_t seed) {
  Timer timer;
  bool pass = true;
  std::ostringstream detail;
  double worst_rmse = 0.0, worst_rate_gap = 0.0;
  for (ToyKind kind : {ToyKind::PerovskiteLike, ToyKind::TorusGaussianMixture, ToyKind::TwoSpeciesChain}) {
    ToyDatasetSpec spec;
    spec.kind = kind;
    spec.n_structures = 100;
    spec.seed = seed;
    const auto d = generate_toy_dataset(spec);
    const MatchSummary self = match_rate(d.structures, d.structures);
    worst_rate_gap = std::max(worst_rate_gap, 1.0 - self.rate);
    worst_rmse = std::max(worst_rmse, self.mean_rmse.value_or(1.0));
    std::vector<Structure> shifted = d.structures;
    for (auto& s : shifted)
      for (auto& x : s.coords) x = wrap(Vec3{x[0] + 0.37, x[1] + 0.37, x[2] + 0.37});
    const MatchSummary moved = match_rate(shifted, d.structures);
    worst_rate_gap = std::max(worst_rate_gap, 1.0 - moved.rate);
    worst_rmse = std::max(worst_rmse, moved.mean_rmse.value_or(1.0) > 1e-9 ? moved.mean_rmse.value_or(1.0) : 0.0);
  }
  pass = worst_rate_gap == 0.0 && worst_rmse == 0.0;
  detail << "self and 0.37-shifted match rate 1 across 3 toys: " << (worst_rate_gap == 0.0 ? "yes" : "no")
         << ", max mean rmse " << fmt(worst_rmse);

  Rng rng(seed);
  double w1_self = 0.0, lp_gap = 0.0;
  for (int inst = 0; inst < 300; ++inst) {
    const std::size_t na = 1 + rng.index(8), nb = 1 + rng.index(8);
    std::vector<double> a(na), b(nb);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal() + 0.5;
    w1_self = std::max(w1_self, wasserstein1(a, a));
    // Transport LP with uniform weights: replicate both supports to a common
    // size, where an optimal plan is a permutation.
    const std::size_t m = std::lcm(na, nb);
    std::vector<double> cost(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = std::abs(a[i / (m / na)] - b[j / (m / nb)]);
    const double lp = solve_assignment(cost, m).cost / static_cast<double>(m);
    lp_gap = std::max(lp_gap, std::abs(lp - wasserstein1(a, b)));
  }
  pass = pass && w1_self == 0.0 && lp_gap < 1e-12;
  detail << "; W1(a,a) max " << fmt(w1_self) << ", LP oracle gap " << fmt(lp_gap) << " over 300 instances";
  return finish(13, "metrics-self-consistency", pass, detail.str(), timer);
}

std::vector<CheckResult> run_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(check_boundary_identities(opt.seed));
  out.push_back(check_encdec_generalization());
  out.push_back(opt.corrupt_vp_cos ? check_vp_schedule(corrupted_vp_tau) : check_vp_schedule());
  out.push_back(check_periodic_geodesic(opt.seed));
  out.push_back(check_velocity_fd(opt.seed));
  out.push_back(check_gradients(opt.seed));
  out.push_back(check_closed_form(opt.seed));
  out.push_back(check_coupling_exhaustive(opt.seed));
  out.push_back(check_dfm_oracle(opt.seed));
  out.push_back(check_antithetic(opt.seed));
  out.push_back(check_integrators(opt.seed));
  out.push_back(check_ou_moments(opt.seed));
  out.push_back(check_metrics_self_consistency(opt.seed));
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end runs

std::vector<double> pair_displacement_marginal(const std::vector<Structure>& set, int axis) {
  std::vector<double> out;
  for (const auto& s : set)
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j)
        out.push_back(std::abs(torus_displacement(s.coords[i], s.coords[j])[static_cast<std::size_t>(axis)]));
  return out;
}

namespace {

void say(const EndToEndOptions& opt, const std::string& msg) {
  if (opt.progress) opt.progress(msg);
}

TrainResult timed_train(const ModelParams& init, const Dataset& d, const TrainConfig& cfg,
                        const BaseDistributionSpec& base, const EndToEndOptions& opt) {
  return train(init, d.subset(d.split.train), d.subset(d.split.val), cfg, base, [&](const EpochLog& l) {
    if (l.epoch % 10 == 0)
      say(opt, "epoch " + std::to_string(l.epoch) + " train " + fmt(l.train.total) + " val " + fmt(l.val_total));
  });
}

}  // namespace

CheckResult run_csp_end_to_end(const EndToEndOptions& opt) {
  Timer timer;
  ToyDatasetSpec ds;
  ds.kind = ToyKind::PerovskiteLike;
  ds.n_structures = opt.n_structures;
  ds.seed = opt.seed;
  const Dataset d = generate_toy_dataset(ds);
  const auto train_set = d.subset(d.split.train);
  const auto test_set = d.subset(d.split.test);
  const BaseDistributionSpec base = fit_lattice_base(train_set);

  NetworkConfig net;
  net.hidden = 64;
  net.layers = 2;
  net.fourier = 4;
  net.time_freqs = 4;
  net.lattice_scale = 4.0;
  TrainConfig cfg;
  cfg.task = Task::Csp;
  cfg.epochs = opt.epochs > 0 ? opt.epochs : 150;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  cfg.cosine_decay = true;
  cfg.coupling = true;
  cfg.random_translation = true;
  cfg.weights.coord_velocity = 4.0;
  cfg.seed = opt.seed;
  Rng init(opt.seed);
  const ModelParams params = init_params(net, init);

  Timer train_timer;
  const TrainResult tr = timed_train(params, d, cfg, base, opt);
  const double train_secs = train_timer.seconds();

  GenerativeModel model{tr.best, cfg.coords, cfg.lattice, base};
  GenerationConfig gen;
  gen.steps = 100;
  gen.seed = opt.seed;
  std::vector<std::vector<int>> comps;
  for (const auto& s : test_set) comps.push_back(s.species);
  const GenerationResult g = generate_csp(model, gen, comps);
  bool compositions_kept = true;
  std::vector<Structure> aligned(test_set.size());
  std::vector<bool> present(test_set.size(), false);
  for (std::size_t k = 0; k < g.structures.size(); ++k) {
    aligned[g.source_index[k]] = g.structures[k];
    present[g.source_index[k]] = true;
    compositions_kept = compositions_kept && g.structures[k].species == comps[g.source_index[k]];
  }
  std::size_t matched = 0;
  double rmse = 0.0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    if (!present[i]) continue;
    const MatchResult m = match_pair(aligned[i], test_set[i]);
    if (m.matched) {
      ++matched;
      rmse += *m.rmse;
    }
  }
  const double rate = static_cast<double>(matched) / static_cast<double>(test_set.size());
  const bool pass = rate >= 0.8 && train_secs <= opt.train_budget && compositions_kept;
  return finish(14, "csp-end-to-end", pass,
                "match rate " + fmt(rate) + " (>= 0.8) on " + std::to_string(test_set.size()) +
                    " held-out structures, mean rmse " + fmt(matched ? rmse / matched : 0.0) + ", training " +
                    fmt(train_secs) + " s (<= " + fmt(opt.train_budget) + "), " + std::to_string(cfg.epochs) +
                    " epochs, NaN aborts " + std::to_string(g.aborted.size()),
                timer);
}

CheckResult run_dng_end_to_end(const EndToEndOptions& opt) {
  Timer timer;
  ToyDatasetSpec ds;
  ds.kind = ToyKind::TorusGaussianMixture;
  ds.n_structures = opt.n_structures;
  ds.atoms_per_cell = 4;
  ds.coord_noise = 0.03;
  ds.seed = opt.seed + 1;
  const Dataset d = generate_toy_dataset(ds);
  const auto train_set = d.subset(d.split.train);
  const auto test_set = d.subset(d.split.test);
  const DatasetStats stats = dataset_stats(train_set);
  const BaseDistributionSpec base = stats.lattice_fit;

  NetworkConfig net;
  net.hidden = 64;
  net.layers = 3;
  net.fourier = 4;
  net.time_freqs = 4;
  net.lattice_scale = 4.0;
  TrainConfig cfg;
  cfg.task = Task::Dng;
  cfg.epochs = opt.epochs > 0 ? opt.epochs : 200;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  cfg.cosine_decay = true;
  cfg.coupling = true;
  cfg.random_translation = true;
  cfg.weights.coord_velocity = 4.0;
  cfg.grad_clip = 0.3;
  cfg.seed = opt.seed;
  Rng init(opt.seed);
  const ModelParams params = init_params(net, init);

  Timer train_timer;
  const TrainResult tr = timed_train(params, d, cfg, base, opt);
  const double train_secs = train_timer.seconds();

  GenerativeModel model{tr.best, cfg.coords, cfg.lattice, base};
  GenerationConfig gen;
  gen.steps = 100;
  gen.seed = opt.seed;
  Rng count_rng(opt.seed);
  const auto counts = sample_atom_counts(stats.atom_counts, test_set.size(), count_rng);
  const GenerationResult g = generate_dng(model, gen, counts);

  std::size_t unmasked = 0, valid = 0;
  for (const auto& s : g.structures) {
    unmasked += count_masked(s.species) == 0;
    valid += structural_validity(s, 0.5);
  }
  Rng base_rng(opt.seed + 2);
  std::vector<Structure> base_set;
  for (const auto& s : test_set) base_set.push_back(sample_base(base, s.size(), base_rng));

  bool marginals_ok = true;
  std::ostringstream ratios;
  for (int axis = 0; axis < 3; ++axis) {
    const auto target = pair_displacement_marginal(test_set, axis);
    const double w_gen = wasserstein1(pair_displacement_marginal(g.structures, axis), target);
    const double w_base = wasserstein1(pair_displacement_marginal(base_set, axis), target);
    marginals_ok = marginals_ok && w_gen <= 0.25 * w_base;
    ratios << (axis ? ", " : "") << fmt(w_gen / w_base);
  }
  const std::size_t n = g.structures.size();
  const bool pass = marginals_ok && unmasked == n && valid == n && n == test_set.size() && train_secs <= opt.train_budget;
  return finish(15, "dng-end-to-end", pass,
                "W1(gen)/W1(base) per axis " + ratios.str() + " (<= 0.25), fully unmasked " + std::to_string(unmasked) + "/" +
                    std::to_string(n) + ", valid at 0.5 " + std::to_string(valid) + "/" + std::to_string(n) +
                    ", training " + fmt(train_secs) + " s (<= " + fmt(opt.train_budget) + "), " +
                    std::to_string(cfg.epochs) + " epochs",
                timer);
}

std::string format_result(const CheckResult& r) {
  std::ostringstream s;
  s << "criterion " << r.criterion << " [" << r.name << "]: " << (r.pass ? "PASS" : "FAIL") << " | " << r.detail
    << " (" << fmt(r.seconds) << " s)";
  return s.str();
}

}  // namespace crysi
