#include "crysi/dfm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crysi {

namespace {

constexpr double kEndTol = 1e-12;

double flow_prob(int j, int a1, double t) {
  double p = 0.0;
  if (j == a1) p += t;
  if (j == kMask) p += 1.0 - t;
  return p;
}

double flow_rate(int j, int a1) {
  double d = 0.0;
  if (j == a1) d += 1.0;
  if (j == kMask) d -= 1.0;
  return d;
}

}  // namespace

std::vector<double> conditional_flow(const TokenSpace& space, int a1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("conditional_flow: t outside [0,1]");
  if (!space.valid(a1) || a1 == kMask) throw std::invalid_argument("conditional_flow: a1 must be a real token");
  std::vector<double> p(space.size(), 0.0);
  for (int j = 0; j < space.size(); ++j) p[j] = flow_prob(j, a1, t);
  return p;
}

double conditional_rate(const TokenSpace& space, int a_t, int i, int a1, double t, const RateOptions& opt) {
  if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("conditional_rate: t outside [0,1)");
  if (i == a_t) throw std::invalid_argument("conditional_rate: diagonal entry requested");
  const double p_src = flow_prob(a_t, a1, t);
  if (p_src <= 0.0) return 0.0;
  if (i != a1 && i != kMask) return 0.0;
  // The masking path is supported on {a1, MASK}.
  const double norm = opt.normalizer == RateNormalizer::Support ? 2.0 : static_cast<double>(space.size());
  double r = std::max(0.0, flow_rate(i, a1) - flow_rate(a_t, a1)) / (norm * p_src);
  if (opt.eta > 0.0) {
    double db = 0.0;
    if (a_t == a1 && i == kMask) db = 1.0;
    if (a_t == kMask && i == a1) db = t / (1.0 - t);
    const double scale = opt.eta_convention == EtaConvention::Squared ? opt.eta * opt.eta : opt.eta;
    r += scale * db;
  }
  return r;
}

std::vector<int> dfm_euler_step(const TokenSpace& space, std::span<const int> a_t, std::span<const int> a1, double t,
                                double dt, const RateOptions& opt, Rng& rng) {
  if (a_t.size() != a1.size()) throw std::invalid_argument("dfm_euler_step: token arrays differ in length");
  if (!(dt > 0.0)) throw std::invalid_argument("dfm_euler_step: dt must be positive");
  if (t + dt > 1.0 + kEndTol) throw std::invalid_argument("dfm_euler_step: step overshoots t = 1");
  const bool terminal = t + dt >= 1.0 - kEndTol;
  std::vector<int> out(a_t.begin(), a_t.end());
  for (std::size_t k = 0; k < a_t.size(); ++k) {
    const int src = a_t[k];
    // The last step lands on t = 1, where no mass remains on MASK.
    if (terminal) {
      if (src == kMask) out[k] = a1[k];
      continue;
    }
    // Only MASK and a1 can carry nonzero rates.
    int targets[2];
    double probs[2];
    int n = 0;
    for (int j : {a1[k], kMask}) {
      if (j == src) continue;
      if (n == 1 && targets[0] == j) continue;
      targets[n] = j;
      probs[n] = conditional_rate(space, src, j, a1[k], t, opt) * dt;
      ++n;
    }
    double off = 0.0;
    for (int q = 0; q < n; ++q) off += probs[q];
    if (off <= 0.0) continue;
    const double scale = off > 1.0 ? 1.0 / off : 1.0;
    double u = rng.uniform();
    for (int q = 0; q < n; ++q) {
      const double pq = probs[q] * scale;
      if (u < pq) {
        out[k] = targets[q];
        break;
      }
      u -= pq;
    }
  }
  return out;
}

int sample_token(std::span<const double> logits, Rng& rng) {
  if (logits.empty()) throw std::invalid_argument("sample_token: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (!std::isfinite(logits[j])) throw std::invalid_argument("sample_token: non-finite logit");
    z += (w[j] = std::exp(logits[j] - mx));
  }
  double u = rng.uniform() * z;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (u < w[j]) return static_cast<int>(j) + 1;
    u -= w[j];
  }
  // Rounding left u past the last bucket: take the most probable token.
  return static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin()) + 1;
}

std::vector<int> dfm_generation_step(const TokenSpace& space, std::span<const double> logits, std::span<const int> a_t,
                                     double t, double dt, const RateOptions& opt, Rng& rng) {
  const std::size_t n = a_t.size();
  const std::size_t width = static_cast<std::size_t>(space.n_real);
  if (logits.size() != n * width) throw std::invalid_argument("dfm_generation_step: logits must be n_atoms x n_real");
  std::vector<int> a1(n);
  for (std::size_t k = 0; k < n; ++k) a1[k] = sample_token(logits.subspan(k * width, width), rng);
  return dfm_euler_step(space, a_t, a1, t, dt, opt, rng);
}

std::size_t count_masked(std::span<const int> tokens) {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), kMask));
}

}  // namespace crysi
