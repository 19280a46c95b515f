#include "crysi/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace crysi {

std::string to_string(Scheme s) { return s == Scheme::Ode ? "ode" : "sde"; }

std::string to_string(Task t) {
  switch (t) {
    case Task::Csp: return "csp";
    case Task::Dng: return "dng";
    case Task::Cfp: return "cfp";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "ode") return Scheme::Ode;
  if (s == "sde") return Scheme::Sde;
  throw std::invalid_argument("unknown scheme '" + s + "' (expected ode or sde)");
}

Task parse_task(const std::string& s) {
  for (auto t : {Task::Csp, Task::Dng, Task::Cfp})
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown task '" + s + "' (expected csp, dng or cfp)");
}

void check_generation_config(const GenerationConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("generation: steps must be >= 1");
  for (const auto* g : {&cfg.coords, &cfg.lattice}) {
    if (!(g->eps.c >= 0.0)) throw std::invalid_argument("generation: epsilon scale c must be >= 0");
    if (!(g->eps.mu > 0.0)) throw std::invalid_argument("generation: epsilon mu must be > 0");
    if (!(g->eps.sigma > 0.0)) throw std::invalid_argument("generation: epsilon sigma must be > 0");
    if (!(g->anneal >= 0.0)) throw std::invalid_argument("generation: annealing slope must be >= 0");
  }
  if (!(cfg.species.eta >= 0.0)) throw std::invalid_argument("generation: species eta must be >= 0");
  if (!(cfg.diffusion_prefactor > 0.0)) throw std::invalid_argument("generation: diffusion prefactor must be > 0");
}

double epsilon_vanish(double c, double mu, double sigma, double t) {
  return c / ((1.0 + std::exp(-(t - mu) / sigma)) * (1.0 + std::exp(-(1.0 - mu - t) / sigma)));
}

double epsilon_vanish(const EpsilonParams& p, double t) { return epsilon_vanish(p.c, p.mu, p.sigma, t); }

double anneal(double b, double s, double t) { return (1.0 + s * t) * b; }

namespace {

// Non-finite values are left in place so the caller can report them.
double wrap_if_finite(double x) { return std::isfinite(x) ? wrap(x) : x; }

}  // namespace

std::vector<double> ode_step(std::span<const double> x, std::span<const double> b, double dt, bool periodic) {
  if (x.size() != b.size()) throw std::invalid_argument("ode_step: size mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + b[i] * dt;
    if (periodic) out[i] = wrap_if_finite(out[i]);
  }
  return out;
}

std::vector<double> sde_step(std::span<const double> x, std::span<const double> b, std::span<const double> z,
                             double gamma, double eps, double dt, Rng& rng, bool periodic,
                             double diffusion_prefactor) {
  if (eps == 0.0) return ode_step(x, b, dt, periodic);
  if (x.size() != b.size() || x.size() != z.size()) throw std::invalid_argument("sde_step: size mismatch");
  if (!(gamma > 0.0)) throw std::invalid_argument("sde_step: eps > 0 requires gamma > 0");
  const double noise = std::sqrt(diffusion_prefactor * eps * dt);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + (b[i] - eps / gamma * z[i]) * dt + noise * rng.normal();
    if (periodic) out[i] = wrap_if_finite(out[i]);
  }
  return out;
}

void check_compatible(const GenerativeModel& model, const GenerationConfig& cfg) {
  check_generation_config(cfg);
  check_parameters(model.coords);
  check_parameters(model.lattice);
  check_base_spec(model.base);
  const std::pair<const char*, std::pair<const GroupGeneration*, const InterpolantSpec*>> groups[] = {
      {"coords", {&cfg.coords, &model.coords}}, {"lattice", {&cfg.lattice, &model.lattice}}};
  for (const auto& [name, g] : groups) {
    if (g.first->scheme != Scheme::Sde) continue;
    if (g.second->gamma_kind == GammaKind::None)
      throw std::invalid_argument(std::string("generation: SDE sampling of ") + name +
                                  " requires gamma(t) > 0, but its interpolant has gamma_kind none");
    if (!model.params.config.denoisers)
      throw std::invalid_argument(std::string("generation: SDE sampling of ") + name +
                                  " requires a network with denoiser heads");
  }
}

namespace {

struct Run {
  std::size_t index;
  Rng rng;
  Structure state;
  bool alive = true;
};

std::vector<double> flat(const std::vector<Vec3>& v) {
  std::vector<double> out;
  out.reserve(3 * v.size());
  for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
  return out;
}

std::vector<double> flat(const Mat3& m) { return flat(std::vector<Vec3>(m.begin(), m.end())); }

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Advances one variable group by one step.
std::vector<double> step_group(const GroupGeneration& g, const InterpolantSpec& spec, const GenerationConfig& cfg,
                               std::vector<double> x, std::vector<double> b, const std::vector<double>& z, int k,
                               double t, double dt, Rng& rng, bool periodic) {
  for (auto& v : b) v = anneal(v, g.anneal, t);
  // The first and last steps use the ODE form so 1/gamma is never needed where gamma vanishes.
  const bool interior = k > 0 && k < cfg.steps - 1;
  if (g.scheme == Scheme::Sde && interior) {
    const double eps = epsilon_vanish(g.eps, t);
    const double gamma = coefficients(spec, t).gamma;
    return sde_step(x, b, z, gamma, eps, dt, rng, periodic, cfg.diffusion_prefactor);
  }
  return ode_step(x, b, dt, periodic);
}

// Structures are integrated in fixed batches of global indices; threads take
// whole batches, so the batch a structure shares is independent of the thread
// count (batched matrix products are not bitwise row-independent).
constexpr std::size_t kBatch = 256;

void integrate(const GenerativeModel& model, const GenerationConfig& cfg, std::vector<Run>& runs, bool dng,
               const TrajectoryFn& trajectory, std::mutex& mu, std::vector<std::string>& aborted) {
  const double dt = 1.0 / cfg.steps;
  const TokenSpace space{model.params.config.n_real};
  const bool sde = cfg.coords.scheme == Scheme::Sde || cfg.lattice.scheme == Scheme::Sde;
  if (trajectory) {
    std::lock_guard lock(mu);
    for (const auto& r : runs) trajectory(r.index, 0.0, r.state);
  }
  for (std::size_t lo = 0; lo < runs.size(); lo += kBatch) {
    const std::size_t hi = std::min(runs.size(), lo + kBatch);
    for (int k = 0; k < cfg.steps; ++k) {
      const double t = k * dt;
      std::vector<std::size_t> live;
      std::vector<Structure> states;
      for (std::size_t i = lo; i < hi; ++i)
        if (runs[i].alive) {
          live.push_back(i);
          states.push_back(runs[i].state);
        }
      if (live.empty()) break;
      const std::vector<double> times(states.size(), t);
      const auto preds = predict(model.params, states, times);
      for (std::size_t q = 0; q < live.size(); ++q) {
        Run& r = runs[live[q]];
        const Prediction& p = preds[q];
        const std::vector<double> zx = sde ? flat(p.z_x) : std::vector<double>(3 * r.state.size(), 0.0);
        const std::vector<double> zl = sde ? flat(p.z_l) : std::vector<double>(9, 0.0);
        auto x = step_group(cfg.coords, model.coords, cfg, flat(r.state.coords), flat(p.b_x), zx, k, t, dt, r.rng,
                            true);
        auto l = step_group(cfg.lattice, model.lattice, cfg, flat(r.state.lattice), flat(p.b_l), zl, k, t, dt,
                            r.rng, false);
        const char* bad = !all_finite(x) ? "coords" : !all_finite(l) ? "lattice" : nullptr;
        if (bad) {
          r.alive = false;
          std::ostringstream msg;
          msg << "structure " << r.index << ": non-finite " << bad << " at step " << k << " (t=" << t << ")";
          std::lock_guard lock(mu);
          aborted.push_back(msg.str());
          continue;
        }
        for (std::size_t i = 0; i < r.state.size(); ++i)
          for (int d = 0; d < 3; ++d) r.state.coords[i][d] = x[3 * i + d];
        for (int a = 0; a < 3; ++a)
          for (int c = 0; c < 3; ++c) r.state.lattice[a][c] = l[3 * a + c];
        if (dng) r.state.species = dfm_generation_step(space, p.logits, r.state.species, t, dt, cfg.species, r.rng);
        if (trajectory) {
          std::lock_guard lock(mu);
          trajectory(r.index, t + dt, r.state);
        }
      }
    }
  }
}

GenerationResult run_all(const GenerativeModel& model, const GenerationConfig& cfg,
                         std::vector<std::pair<std::size_t, const std::vector<int>*>> jobs, bool dng,
                         const TrajectoryFn& trajectory, int threads) {
  check_compatible(model, cfg);
  Rng master(cfg.seed);
  std::vector<Run> runs;
  runs.reserve(jobs.size());
  BaseDistributionSpec base = model.base;
  base.species_kind = dng ? SpeciesBase::AllMasked : SpeciesBase::FixedComposition;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    Run r{i, master.split(), {}};
    r.state = sample_base(base, jobs[i].first, r.rng, jobs[i].second);
    runs.push_back(std::move(r));
  }

  std::mutex mu;
  std::vector<std::string> aborted;
  const std::size_t n_batches = (runs.size() + kBatch - 1) / kBatch;
  const std::size_t n_threads = std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, std::max<std::size_t>(1, n_batches));
  if (n_threads == 1) {
    integrate(model, cfg, runs, dng, trajectory, mu, aborted);
  } else {
    std::vector<std::vector<Run>> chunks(n_threads);
    for (std::size_t i = 0; i < runs.size(); ++i)
      chunks[(i / kBatch) * n_threads / n_batches].push_back(std::move(runs[i]));
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < n_threads; ++c)
      pool.emplace_back([&, c] {
        try {
          integrate(model, cfg, chunks[c], dng, trajectory, mu, aborted);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    runs.clear();
    for (auto& ch : chunks)
      for (auto& r : ch) runs.push_back(std::move(r));
  }

  GenerationResult res;
  std::sort(aborted.begin(), aborted.end());
  res.aborted = std::move(aborted);
  for (auto& r : runs) {
    if (!r.alive) continue;
    res.source_index.push_back(r.index);
    res.structures.push_back(std::move(r.state));
  }
  return res;
}

}  // namespace

GenerationResult generate_csp(const GenerativeModel& model, const GenerationConfig& cfg,
                              const std::vector<std::vector<int>>& compositions, const TrajectoryFn& trajectory,
                              int threads) {
  std::vector<std::pair<std::size_t, const std::vector<int>*>> jobs;
  for (const auto& c : compositions) {
    if (c.empty()) throw std::invalid_argument("generate: empty composition");
    for (int a : c)
      if (a < 1 || a > model.params.config.n_real)
        throw std::invalid_argument("generate: composition species outside 1.." +
                                    std::to_string(model.params.config.n_real));
    jobs.emplace_back(c.size(), &c);
  }
  return run_all(model, cfg, std::move(jobs), false, trajectory, threads);
}

GenerationResult generate_dng(const GenerativeModel& model, const GenerationConfig& cfg,
                              const std::vector<std::size_t>& atom_counts, const TrajectoryFn& trajectory,
                              int threads) {
  std::vector<std::pair<std::size_t, const std::vector<int>*>> jobs;
  for (auto n : atom_counts) {
    if (n < 1) throw std::invalid_argument("generate: atom count must be >= 1");
    jobs.emplace_back(n, nullptr);
  }
  return run_all(model, cfg, std::move(jobs), true, trajectory, threads);
}

std::vector<std::size_t> sample_atom_counts(const std::map<std::size_t, std::size_t>& histogram, std::size_t n,
                                            Rng& rng) {
  std::size_t total = 0;
  for (const auto& [_, c] : histogram) total += c;
  if (total == 0) throw std::invalid_argument("sample_atom_counts: empty histogram");
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = rng.index(total);
    for (const auto& [count, c] : histogram) {
      if (r < c) {
        out.push_back(count);
        break;
      }
      r -= c;
    }
  }
  return out;
}

}  // namespace crysi
