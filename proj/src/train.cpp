#include "crysi/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crysi {

void check_train_config(const TrainConfig& cfg, const NetworkConfig& net) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("train: weight decay must be >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw std::invalid_argument("train: moment decay rates must lie in [0, 1)");
  if (!(cfg.adam_eps > 0.0)) throw std::invalid_argument("train: optimizer epsilon must be > 0");
  if (!(cfg.grad_clip >= 0.0)) throw std::invalid_argument("train: grad_clip must be >= 0");
  if (!(cfg.lr_floor >= 0.0 && cfg.lr_floor <= 1.0)) throw std::invalid_argument("train: lr_floor must lie in [0, 1]");
  check_parameters(cfg.coords);
  check_parameters(cfg.lattice);
  check_network_config(net);
  if (cfg.task == Task::Cfp && !net.composition_only)
    throw std::invalid_argument("train: the cfp task needs a composition-only network");
  if (cfg.task != Task::Cfp && net.composition_only)
    throw std::invalid_argument("train: a composition-only network can only be trained on the cfp task");
  normalize_weights(cfg.weights, active_terms(cfg, net));
}

LossTerms active_terms(const TrainConfig& cfg, const NetworkConfig& net) {
  LossTerms t;
  const bool geometry = cfg.task != Task::Cfp;
  t.coord_velocity = geometry;
  t.lattice_velocity = geometry;
  t.coord_denoiser = geometry && net.denoisers && cfg.coords.gamma_kind != GammaKind::None;
  t.lattice_denoiser = geometry && net.denoisers && cfg.lattice.gamma_kind != GammaKind::None;
  t.species = cfg.task != Task::Csp;
  return t;
}

BatchLoss batch_loss(ad::Tape& tape, const ModelParams& params, const BoundParams& bound,
                     std::span<const Structure> batch, const TrainConfig& cfg, const BaseDistributionSpec& base,
                     Rng& rng) {
  const bool generate_species = cfg.task != Task::Csp;
  const bool latent = cfg.coords.gamma_kind != GammaKind::None || cfg.lattice.gamma_kind != GammaKind::None;
  const bool anti = cfg.antithetic && latent;
  const double clamp = std::max(cfg.coords.time_clamp, cfg.lattice.time_clamp);
  BaseDistributionSpec b = base;
  b.species_kind = generate_species ? SpeciesBase::AllMasked : SpeciesBase::FixedComposition;

  std::vector<Structure> states;
  std::vector<double> times, vx, vl, zx_all, zl_all;
  std::vector<std::size_t> cls;
  for (const Structure& target : batch) {
    Structure x1 = target;
    if (cfg.random_translation) {
      const Vec3 shift{rng.uniform(), rng.uniform(), rng.uniform()};
      for (auto& x : x1.coords) x = wrap(Vec3{x[0] + shift[0], x[1] + shift[1], x[2] + shift[2]});
    }
    const std::size_t n = x1.size();
    if (n == 0) throw std::invalid_argument("train: structure without atoms");
    const double t = clamp + (1.0 - 2.0 * clamp) * rng.uniform();
    Structure x0 = sample_base(b, n, rng, generate_species ? nullptr : &x1.species);
    if (cfg.coupling) x0 = min_permutation_coupling(x0, x1).permuted;

    std::vector<double> zx(3 * n), zl(9);
    for (auto& v : zx) v = rng.normal();
    for (auto& v : zl) v = rng.normal();
    std::vector<int> a_t = x1.species;
    if (generate_species)
      for (auto& a : a_t)
        if (rng.uniform() >= t) a = kMask;

    std::vector<double> c0, c1, l0, l1;
    for (std::size_t i = 0; i < n; ++i) {
      c0.insert(c0.end(), x0.coords[i].begin(), x0.coords[i].end());
      c1.insert(c1.end(), x1.coords[i].begin(), x1.coords[i].end());
    }
    for (int r = 0; r < 3; ++r) {
      l0.insert(l0.end(), x0.lattice[r].begin(), x0.lattice[r].end());
      l1.insert(l1.end(), x1.lattice[r].begin(), x1.lattice[r].end());
    }

    for (double sign : anti ? std::vector<double>{1.0, -1.0} : std::vector<double>{1.0}) {
      std::vector<double> zxs(zx), zls(zl);
      for (auto& v : zxs) v *= sign;
      for (auto& v : zls) v *= sign;
      const auto xt = periodic_interpolate(cfg.coords, c0, c1, zxs, t);
      const auto v = periodic_velocity(cfg.coords, c0, c1, zxs, t);
      std::vector<Vec3> v3(n);
      for (std::size_t i = 0; i < n; ++i) v3[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
      for (const auto& r : remove_com(v3)) vx.insert(vx.end(), r.begin(), r.end());
      const auto lt = interpolate(cfg.lattice, l0, l1, zls, t);
      const auto lv = interpolant_velocity(cfg.lattice, l0, l1, zls, t);
      vl.insert(vl.end(), lv.begin(), lv.end());
      zx_all.insert(zx_all.end(), zxs.begin(), zxs.end());
      zl_all.insert(zl_all.end(), zls.begin(), zls.end());

      Structure st;
      st.species = a_t;
      st.coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) st.coords[i] = {xt[3 * i], xt[3 * i + 1], xt[3 * i + 2]};
      for (int r = 0; r < 3; ++r) st.lattice[r] = {lt[3 * r], lt[3 * r + 1], lt[3 * r + 2]};
      states.push_back(std::move(st));
      times.push_back(t);
      for (int a : x1.species) cls.push_back(static_cast<std::size_t>(a - 1));
    }
  }

  const NetworkOutput out = forward(tape, params, bound, states, times);
  const std::size_t n_atoms = vx.size() / 3, n_struct = states.size();
  const LossTerms active = active_terms(cfg, params.config);
  BatchLoss bl;
  if (active.coord_velocity)
    bl.parts.coord_velocity = velocity_loss(out.b_x, tape.constant(ad::Tensor({n_atoms, 3}, std::move(vx))));
  if (active.lattice_velocity)
    bl.parts.lattice_velocity = velocity_loss(out.b_l, tape.constant(ad::Tensor({n_struct, 9}, std::move(vl))));
  if (active.coord_denoiser)
    bl.parts.coord_denoiser = denoiser_loss(out.z_x, tape.constant(ad::Tensor({n_atoms, 3}, std::move(zx_all))));
  if (active.lattice_denoiser)
    bl.parts.lattice_denoiser =
        denoiser_loss(out.z_l, tape.constant(ad::Tensor({n_struct, 9}, std::move(zl_all))));
  if (active.species) bl.parts.species = species_loss(out.logits, cls);
  bl.total = total_loss(bl.parts, cfg.weights, active);
  return bl;
}

AdamState init_adam(const ModelParams& params) {
  AdamState s;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t.value.size(), 0.0);
    s.v.emplace_back(t.value.size(), 0.0);
  }
  return s;
}

void clip_gradients(std::vector<std::vector<double>>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto& g : grads)
    for (double& v : g) v *= f;
}

void adam_update(ModelParams& params, AdamState& st, const std::vector<std::vector<double>>& grads,
                 const TrainConfig& cfg) {
  if (grads.size() != params.tensors.size() || st.m.size() != params.tensors.size())
    throw std::invalid_argument("adam_update: gradient/parameter count mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& w = params.tensors[k].value.data;
    const auto& g = grads[k];
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double step = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
      w[i] -= cfg.lr * (step + cfg.weight_decay * w[i]);
    }
  }
}

namespace {

void accumulate(TermTotals& acc, const BatchLoss& bl) {
  acc.total += bl.total.item();
  if (bl.parts.coord_velocity) acc.coord_velocity += bl.parts.coord_velocity->item();
  if (bl.parts.coord_denoiser) acc.coord_denoiser += bl.parts.coord_denoiser->item();
  if (bl.parts.lattice_velocity) acc.lattice_velocity += bl.parts.lattice_velocity->item();
  if (bl.parts.lattice_denoiser) acc.lattice_denoiser += bl.parts.lattice_denoiser->item();
  if (bl.parts.species) acc.species += bl.parts.species->item();
}

TermTotals scaled(TermTotals t, double f) {
  for (double* v : {&t.total, &t.coord_velocity, &t.coord_denoiser, &t.lattice_velocity, &t.lattice_denoiser,
                    &t.species})
    *v *= f;
  return t;
}

std::string breakdown(const BatchLoss& bl) {
  std::ostringstream s;
  auto part = [&](const char* name, const std::optional<ad::Var>& v) {
    if (v) s << ' ' << name << '=' << v->item();
  };
  part("coord_velocity", bl.parts.coord_velocity);
  part("coord_denoiser", bl.parts.coord_denoiser);
  part("lattice_velocity", bl.parts.lattice_velocity);
  part("lattice_denoiser", bl.parts.lattice_denoiser);
  part("species", bl.parts.species);
  return s.str();
}

}  // namespace

EpochResult train_epoch(ModelParams& params, AdamState& adam, const std::vector<Structure>& data,
                        const TrainConfig& cfg, const BaseDistributionSpec& base, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  EpochResult res;
  std::size_t batches = 0;
  for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
    const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
    std::vector<Structure> batch;
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
    ad::Tape tape;
    const BoundParams bp = bind(tape, params);
    const BatchLoss bl = batch_loss(tape, params, bp, batch, cfg, base, rng);
    if (!std::isfinite(bl.total.item()))
      throw TrainError("non-finite loss in batch " + std::to_string(batches) + ":" + breakdown(bl));
    tape.backward(bl.total);
    std::vector<std::vector<double>> grads;
    grads.reserve(params.tensors.size());
    for (const auto& t : params.tensors) grads.push_back(bp[t.name].grad());
    clip_gradients(grads, cfg.grad_clip);
    adam_update(params, adam, grads, cfg);
    accumulate(res.mean, bl);
    res.batch_loss.push_back(bl.total.item());
    ++batches;
  }
  res.mean = scaled(res.mean, 1.0 / static_cast<double>(batches));
  return res;
}

TermTotals evaluate_loss(const ModelParams& params, const std::vector<Structure>& data, const TrainConfig& cfg,
                         const BaseDistributionSpec& base, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("evaluate_loss: empty dataset");
  Rng rng(seed);
  TermTotals acc;
  std::size_t batches = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += cfg.batch_size) {
    const std::size_t hi = std::min(data.size(), lo + cfg.batch_size);
    const std::span<const Structure> batch(data.data() + lo, hi - lo);
    ad::Tape tape;
    const BoundParams bp = bind(tape, params);
    accumulate(acc, batch_loss(tape, params, bp, batch, cfg, base, rng));
    ++batches;
  }
  return scaled(acc, 1.0 / static_cast<double>(batches));
}

TrainResult train(ModelParams params, const std::vector<Structure>& train_set, const std::vector<Structure>& val_set,
                  const TrainConfig& cfg, const BaseDistributionSpec& base,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  check_train_config(cfg, params.config);
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const std::vector<Structure>& selection = val_set.empty() ? train_set : val_set;
  const std::uint64_t val_seed = cfg.seed ^ 0x5eed5eedULL;
  Rng rng(cfg.seed);
  AdamState adam = init_adam(params);
  TrainResult res;
  res.best = params;
  res.best_val = evaluate_loss(params, selection, cfg, base, val_seed).total;
  for (int e = 1; e <= cfg.epochs; ++e) {
    EpochLog log;
    log.epoch = e;
    TrainConfig epoch_cfg = cfg;
    if (cfg.cosine_decay) {
      const double progress = static_cast<double>(e - 1) / static_cast<double>(cfg.epochs);
      epoch_cfg.lr = cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * 0.5 * (1.0 + std::cos(M_PI * progress)));
    }
    log.train = train_epoch(params, adam, train_set, epoch_cfg, base, rng).mean;
    log.val_total = evaluate_loss(params, selection, cfg, base, val_seed).total;
    if (log.val_total < res.best_val) {
      res.best_val = log.val_total;
      res.best_epoch = e;
      res.best = params;
    }
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return res;
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,total,coord_velocity,coord_denoiser,lattice_velocity,lattice_denoiser,species,val_total\n";
  for (const auto& l : log)
    out << l.epoch << ',' << l.train.total << ',' << l.train.coord_velocity << ',' << l.train.coord_denoiser << ','
        << l.train.lattice_velocity << ',' << l.train.lattice_denoiser << ',' << l.train.species << ','
        << l.val_total << '\n';
  return out.str();
}

ClosedFormReport closed_form_sanity(const InterpolantSpec& spec, double t, double m, double sigma, std::size_t n,
                                    std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("closed_form_sanity: need at least two samples");
  check_parameters(spec);
  Rng rng(seed);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.normal(), x1 = m + sigma * rng.normal(), z = rng.normal();
    const double x = interpolate(spec, std::span(&x0, 1), std::span(&x1, 1), std::span(&z, 1), t)[0];
    sum += x;
    sum2 += x * x;
  }
  const double nd = static_cast<double>(n);
  const Coefficients c = coefficients(spec, t);
  ClosedFormReport r;
  r.mean = sum / nd;
  r.var = (sum2 - nd * r.mean * r.mean) / (nd - 1.0);
  r.expected_mean = c.beta * m;
  r.expected_var = c.alpha * c.alpha + c.beta * c.beta * sigma * sigma + c.gamma * c.gamma;
  r.se_mean = std::sqrt(r.expected_var / nd);
  r.se_var = r.expected_var * std::sqrt(2.0 / (nd - 1.0));
  r.ok = std::abs(r.mean - r.expected_mean) <= 3.0 * r.se_mean && std::abs(r.var - r.expected_var) <= 3.0 * r.se_var;
  return r;
}

}  // namespace crysi
