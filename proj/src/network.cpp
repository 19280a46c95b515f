#include "crysi/network.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace crysi {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr const char* kCheckpointFormat = "crysi-checkpoint";
constexpr int kCheckpointVersion = 1;

int time_width(const NetworkConfig& cfg) { return 1 + 2 * cfg.time_freqs; }
int pair_width(const NetworkConfig& cfg) { return 6 * cfg.fourier; }
int message_width(const NetworkConfig& cfg) {
  return 2 * cfg.hidden + (cfg.composition_only ? 0 : 9 + pair_width(cfg));
}

void add_linear(ModelParams& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ad::Tensor w = ad::Tensor::zeros({in, out});
  ad::Tensor b = ad::Tensor::zeros({1, out});
  for (auto& v : w.data) v = rng.uniform(-bound, bound);
  for (auto& v : b.data) v = rng.uniform(-bound, bound);
  p.tensors.push_back({name + ".w", std::move(w)});
  p.tensors.push_back({name + ".b", std::move(b)});
}

// Two hidden tanh layers.
void add_mlp(ModelParams& p, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  add_linear(p, name + ".0", in, hidden, rng);
  add_linear(p, name + ".1", hidden, hidden, rng);
  add_linear(p, name + ".2", hidden, out, rng);
}

ad::Var linear(const BoundParams& bp, const std::string& name, const ad::Var& x) {
  return ad::add_row(ad::matmul(x, bp[name + ".w"]), bp[name + ".b"]);
}

ad::Var mlp(const BoundParams& bp, const std::string& name, const ad::Var& x) {
  ad::Var h = ad::tanh(linear(bp, name + ".0", x));
  h = ad::tanh(linear(bp, name + ".1", h));
  return linear(bp, name + ".2", h);
}

std::string layer_name(const char* kind, int s) { return std::string(kind) + std::to_string(s); }

}  // namespace

void check_network_config(const NetworkConfig& cfg) {
  if (cfg.n_real < 1) throw std::invalid_argument("network: n_real must be >= 1");
  if (cfg.layers < 1) throw std::invalid_argument("network: at least one message-passing layer required");
  if (cfg.hidden < 1 || cfg.embed < 1) throw std::invalid_argument("network: widths must be positive");
  if (cfg.fourier < 1 || cfg.time_freqs < 0) throw std::invalid_argument("network: invalid frequency counts");
  if (!(cfg.lattice_scale > 0.0)) throw std::invalid_argument("network: lattice_scale must be positive");
}

const ad::Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::out_of_range("ModelParams: no tensor named '" + name + "'");
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

ModelParams init_params(const NetworkConfig& cfg, Rng& rng) {
  check_network_config(cfg);
  ModelParams p;
  p.config = cfg;
  const std::size_t h = cfg.hidden;
  {
    // MASK owns row 0.
    ad::Tensor e = ad::Tensor::zeros({static_cast<std::size_t>(cfg.n_real + 1), static_cast<std::size_t>(cfg.embed)});
    for (auto& v : e.data) v = rng.uniform(-1.0, 1.0);
    p.tensors.push_back({"embed", std::move(e)});
  }
  add_linear(p, "init", cfg.embed + time_width(cfg), h, rng);
  for (int s = 0; s < cfg.layers; ++s) {
    add_mlp(p, layer_name("msg", s), message_width(cfg), h, h, rng);
    add_mlp(p, layer_name("upd", s), 2 * h, h, h, rng);
  }
  add_mlp(p, "head_x", h, h, 3, rng);
  add_mlp(p, "head_l", h, h, 9, rng);
  if (cfg.denoisers) {
    add_mlp(p, "head_zx", h, h, 3, rng);
    add_mlp(p, "head_zl", h, h, 9, rng);
  }
  add_mlp(p, "head_a", h, h, cfg.n_real, rng);
  return p;
}

std::vector<double> time_features(double t, int n_freqs) {
  std::vector<double> f;
  f.reserve(1 + 2 * n_freqs);
  f.push_back(t);
  for (int k = 1; k <= n_freqs; ++k) {
    f.push_back(std::sin(kPi * k * t));
    f.push_back(std::cos(kPi * k * t));
  }
  return f;
}

std::vector<double> pair_features(const Vec3& dx, int n_freqs) {
  std::vector<double> f;
  f.reserve(6 * n_freqs);
  for (int d = 0; d < 3; ++d)
    for (int k = 1; k <= n_freqs; ++k) {
      f.push_back(std::sin(2.0 * kPi * k * dx[d]));
      f.push_back(std::cos(2.0 * kPi * k * dx[d]));
    }
  return f;
}

Features featurize(const ModelParams& params, const Structure& s, double t) {
  const auto& cfg = params.config;
  const auto& embed = params.get("embed");
  const std::size_t n = s.size();
  const std::size_t ew = cfg.embed, tw = time_width(cfg), pw = pair_width(cfg);
  Features f;
  f.node = ad::Tensor::zeros({n, ew + tw});
  const auto tf = time_features(t, cfg.time_freqs);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = s.species[i];
    if (a < 0 || a > cfg.n_real) throw std::invalid_argument("featurize: species token outside vocabulary");
    for (std::size_t k = 0; k < ew; ++k) f.node.at(i, k) = embed.at(static_cast<std::size_t>(a), k);
    for (std::size_t k = 0; k < tw; ++k) f.node.at(i, ew + k) = tf[k];
  }
  f.pair = ad::Tensor::zeros({n * (n > 0 ? n - 1 : 0), pw});
  std::size_t row = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec3 dx{s.coords[j][0] - s.coords[i][0], s.coords[j][1] - s.coords[i][1], s.coords[j][2] - s.coords[i][2]};
      const auto pf = pair_features(dx, cfg.fourier);
      for (std::size_t k = 0; k < pw; ++k) f.pair.at(row, k) = pf[k];
      f.pair_src.push_back(i);
      f.pair_dst.push_back(j);
      ++row;
    }
  f.lattice = ad::Tensor::zeros({1, 9});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f.lattice.data[3 * r + c] = s.lattice[r][c] / cfg.lattice_scale;
  return f;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params) {
  BoundParams bp;
  for (const auto& t : params.tensors) bp.vars.emplace(t.name, tape.leaf(t.value));
  return bp;
}

NetworkOutput forward(ad::Tape& tape, const ModelParams& params, const BoundParams& bp,
                      std::span<const Structure> batch, std::span<const double> times) {
  const auto& cfg = params.config;
  if (batch.size() != times.size()) throw std::invalid_argument("forward: one time per structure required");
  const std::size_t tw = time_width(cfg), pw = pair_width(cfg);

  NetworkOutput out;
  std::vector<std::size_t> tokens, node_struct, src, dst;
  std::vector<double> node_time, pair_geo;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Structure& s = batch[b];
    const std::size_t off = tokens.size();
    out.first_atom.push_back(off);
    const auto tf = time_features(times[b], cfg.time_freqs);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int a = s.species[i];
      if (a < 0 || a > cfg.n_real) throw std::invalid_argument("forward: species token outside vocabulary");
      tokens.push_back(static_cast<std::size_t>(a));
      node_struct.push_back(b);
      node_time.insert(node_time.end(), tf.begin(), tf.end());
    }
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i == j) continue;
        src.push_back(off + i);
        dst.push_back(off + j);
        if (cfg.composition_only) continue;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) pair_geo.push_back(s.lattice[r][c] / cfg.lattice_scale);
        const Vec3 dx{s.coords[j][0] - s.coords[i][0], s.coords[j][1] - s.coords[i][1],
                      s.coords[j][2] - s.coords[i][2]};
        const auto pf = pair_features(dx, cfg.fourier);
        pair_geo.insert(pair_geo.end(), pf.begin(), pf.end());
      }
  }
  const std::size_t n_nodes = tokens.size(), n_pairs = src.size(), n_struct = batch.size();

  ad::Var emb = ad::gather_rows(bp["embed"], tokens);
  ad::Var tfeat = tape.constant(ad::Tensor({n_nodes, tw}, std::move(node_time)));
  ad::Var h = linear(bp, "init", ad::concat_cols({emb, tfeat}));

  std::optional<ad::Var> geo;
  if (!cfg.composition_only) geo = tape.constant(ad::Tensor({n_pairs, 9 + pw}, std::move(pair_geo)));

  for (int s = 0; s < cfg.layers; ++s) {
    ad::Var hi = ad::gather_rows(h, src);
    ad::Var hj = ad::gather_rows(h, dst);
    ad::Var msg_in = geo ? ad::concat_cols({hi, hj, *geo}) : ad::concat_cols({hi, hj});
    ad::Var m = mlp(bp, layer_name("msg", s), msg_in);
    ad::Var agg = ad::segment_sum(m, src, n_nodes);
    h = ad::add(h, mlp(bp, layer_name("upd", s), ad::concat_cols({h, agg})));
  }

  ad::Var pooled = ad::segment_mean(h, node_struct, n_struct);
  out.b_x = mlp(bp, "head_x", h);
  out.b_l = mlp(bp, "head_l", pooled);
  if (cfg.denoisers) {
    out.z_x = mlp(bp, "head_zx", h);
    out.z_l = mlp(bp, "head_zl", pooled);
  }
  out.logits = mlp(bp, "head_a", h);
  return out;
}

std::vector<Prediction> predict(const ModelParams& params, std::span<const Structure> batch,
                                std::span<const double> times) {
  ad::Tape tape;
  const BoundParams bp = bind(tape, params);
  const NetworkOutput o = forward(tape, params, bp, batch, times);
  const std::size_t nr = static_cast<std::size_t>(params.config.n_real);
  std::vector<Prediction> preds(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Prediction& p = preds[b];
    const std::size_t off = o.first_atom[b], n = batch[b].size();
    p.b_x.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 3; ++d) p.b_x[i][d] = o.b_x.value()[(off + i) * 3 + d];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.b_l[r][c] = o.b_l.value()[b * 9 + 3 * r + c];
    if (params.config.denoisers) {
      p.z_x.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) p.z_x[i][d] = o.z_x.value()[(off + i) * 3 + d];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.z_l[r][c] = o.z_l.value()[b * 9 + 3 * r + c];
    }
    p.logits.assign(o.logits.value().begin() + static_cast<std::ptrdiff_t>(off * nr),
                    o.logits.value().begin() + static_cast<std::ptrdiff_t>((off + n) * nr));
  }
  return preds;
}

Prediction predict(const ModelParams& params, const Structure& s, double t) {
  return predict(params, std::span<const Structure>(&s, 1), std::span<const double>(&t, 1)).front();
}

std::vector<Vec3> remove_com(std::span<const Vec3> v) {
  if (v.empty()) throw std::invalid_argument("remove_com: no atoms");
  Vec3 mean{};
  for (const auto& x : v)
    for (int d = 0; d < 3; ++d) mean[d] += x[d];
  for (auto& m : mean) m /= static_cast<double>(v.size());
  std::vector<Vec3> out(v.begin(), v.end());
  for (auto& x : out)
    for (int d = 0; d < 3; ++d) x[d] -= mean[d];
  return out;
}

nlohmann::json network_config_to_json(const NetworkConfig& c) {
  return {{"n_real", c.n_real},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"embed", c.embed},
          {"fourier", c.fourier},
          {"time_freqs", c.time_freqs},
          {"denoisers", c.denoisers},
          {"composition_only", c.composition_only},
          {"lattice_scale", c.lattice_scale}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.n_real = j.at("n_real").get<int>();
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.embed = j.at("embed").get<int>();
  c.fourier = j.at("fourier").get<int>();
  c.time_freqs = j.at("time_freqs").get<int>();
  c.denoisers = j.at("denoisers").get<bool>();
  c.composition_only = j.at("composition_only").get<bool>();
  c.lattice_scale = j.at("lattice_scale").get<double>();
  check_network_config(c);
  return c;
}

nlohmann::json checkpoint_to_json(const ModelParams& params, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = network_config_to_json(params.config);
  auto tensors = nlohmann::json::array();
  for (const auto& t : params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.value.shape}, {"data", t.value.data}});
  j["tensors"] = std::move(tensors);
  j["metadata"] = metadata;
  return j;
}

ModelParams checkpoint_from_json(const nlohmann::json& j, nlohmann::json* metadata) {
  if (j.value("format", "") != kCheckpointFormat) throw std::invalid_argument("not a crysi checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw std::invalid_argument("unsupported checkpoint version");
  ModelParams p;
  p.config = network_config_from_json(j.at("config"));
  // The manifest must match what this config would allocate.
  Rng dummy(0);
  const ModelParams expected = init_params(p.config, dummy);
  const auto& tensors = j.at("tensors");
  if (tensors.size() != expected.tensors.size()) throw std::invalid_argument("checkpoint tensor count does not match config");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& e = expected.tensors[k];
    const std::string name = tensors[k].at("name").get<std::string>();
    const auto shape = tensors[k].at("shape").get<ad::Shape>();
    if (name != e.name || shape != e.value.shape) {
      throw std::invalid_argument("checkpoint tensor '" + name + "' " + ad::to_string(shape) + " does not match '" +
                                  e.name + "' " + ad::to_string(e.value.shape));
    }
    p.tensors.push_back({name, ad::Tensor(shape, tensors[k].at("data").get<std::vector<double>>())});
  }
  if (metadata) *metadata = j.value("metadata", nlohmann::json::object());
  return p;
}

}  // namespace crysi
