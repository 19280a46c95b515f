#pragma once

#include <span>
#include <vector>

#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

namespace crysi {

// Species vocabulary: MASK (token 0) plus real elements 1..n_real.
struct TokenSpace {
  int n_real = kDefaultElements;
  int size() const { return n_real + 1; }
  static constexpr int mask() { return kMask; }
  bool valid(int token) const { return token >= 0 && token <= n_real; }
};

// Normaliser in the denominator of the conditional rate. `Support` divides by
// the number of tokens with nonzero conditional probability (2 on the masking
// path), which makes the chain reproduce the conditional flow's marginals.
// `Vocabulary` divides by the full token count S.
enum class RateNormalizer { Support, Vocabulary };

// How the stochasticity eta enters the detailed-balance term. `Squared` scales
// a matrix whose entries already carry eta (eta^2 overall); `Linear` uses the
// unit-entry matrix (eta overall).
enum class EtaConvention { Squared, Linear };

struct RateOptions {
  double eta = 0.0;
  RateNormalizer normalizer = RateNormalizer::Support;
  EtaConvention eta_convention = EtaConvention::Squared;
};

// p_{t|1}(j | a1) = t [j == a1] + (1 - t) [j == MASK]
std::vector<double> conditional_flow(const TokenSpace& space, int a1, double t);

// Rate of jumping from a_t to i != a_t given target a1. Targets outside the
// support of the conditional flow, and sources the flow cannot reach, get 0.
double conditional_rate(const TokenSpace& space, int a_t, int i, int a1, double t, const RateOptions& opt);

// One Euler step of the token chain. Each token jumps to j with probability
// R(a_t, j | a1) dt; if the off-diagonal mass exceeds 1 it is renormalised. When
// t + dt reaches 1 every remaining MASK token is replaced by its a1.
std::vector<int> dfm_euler_step(const TokenSpace& space, std::span<const int> a_t, std::span<const int> a1, double t,
                                double dt, const RateOptions& opt, Rng& rng);

// Draw one real token (1..n_real) from a row of logits over the real tokens.
int sample_token(std::span<const double> logits, Rng& rng);

// Generation-time update: draws a1 per atom from softmax(logits) (rows of
// n_real logits) and takes one Euler step with it.
std::vector<int> dfm_generation_step(const TokenSpace& space, std::span<const double> logits, std::span<const int> a_t,
                                     double t, double dt, const RateOptions& opt, Rng& rng);

std::size_t count_masked(std::span<const int> tokens);

}  // namespace crysi
