#include <doctest.h>

#include <cmath>
#include <numeric>

#include "crysi/dfm.hpp"
#include "crysi/interpolants.hpp"
#include "crysi/losses.hpp"
#include "crysi/rng.hpp"

using namespace crysi;

TEST_SUITE("dfm") {
  TEST_CASE("conditional flow is a distribution on {a1, MASK}") {
    const TokenSpace space{5};
    for (double t : {0.0, 0.3, 1.0}) {
      const auto p = conditional_flow(space, 3, t);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
      CHECK(p[3] == doctest::Approx(t));
      CHECK(p[kMask] == doctest::Approx(1 - t));
    }
    CHECK_THROWS(conditional_flow(space, kMask, 0.5));
    CHECK_THROWS(conditional_flow(space, 2, 1.5));
  }

  TEST_CASE("rates are nonnegative and vanish off the support") {
    const TokenSpace space{4};
    RateOptions opt;
    for (double eta : {0.0, 0.5}) {
      opt.eta = eta;
      for (double t : {0.0, 0.4, 0.9})
        for (int a1 = 1; a1 <= 4; ++a1)
          for (int from = 0; from <= 4; ++from)
            for (int to = 0; to <= 4; ++to) {
              if (from == to) continue;
              const double r = conditional_rate(space, from, to, a1, t, opt);
              REQUIRE(r >= 0.0);
              if (to != a1 && to != kMask) REQUIRE(r == 0.0);
              if (from != a1 && from != kMask) REQUIRE(r == 0.0);
            }
    }
    opt.eta = 0.0;
    // Unmasking rate on the masking path: d/dt t over the remaining mass, 1 / (1 - t).
    CHECK(conditional_rate(space, kMask, 2, 2, 0.5, opt) == doctest::Approx(2.0));
    opt.normalizer = RateNormalizer::Vocabulary;
    CHECK(conditional_rate(space, kMask, 2, 2, 0.5, opt) == doctest::Approx(4.0 / 5.0));
    opt.normalizer = RateNormalizer::Support;
    CHECK(conditional_rate(space, 2, kMask, 2, 0.5, opt) == 0.0);
    opt.eta = 0.5;
    CHECK(conditional_rate(space, 2, kMask, 2, 0.5, opt) == doctest::Approx(0.25));
    opt.eta_convention = EtaConvention::Linear;
    CHECK(conditional_rate(space, 2, kMask, 2, 0.5, opt) == doctest::Approx(0.5));
  }

  TEST_CASE("Euler step forces every MASK out at the final step") {
    const TokenSpace space{3};
    Rng rng(31);
    const std::vector<int> a_t{kMask, 2, kMask}, a1{1, 2, 3};
    RateOptions opt;
    opt.eta = 2.0;
    CHECK(dfm_euler_step(space, a_t, a1, 0.99, 0.01, opt, rng) == a1);
    CHECK_THROWS(dfm_euler_step(space, a_t, a1, 0.99, 0.02, opt, rng));
  }

  TEST_CASE("one-step unmasking probability matches the rate") {
    const TokenSpace space{3};
    Rng rng(32);
    const double t = 0.2, dt = 0.05;
    int unmasked = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) unmasked += dfm_euler_step(space, std::vector<int>{kMask}, std::vector<int>{2}, t, dt, {}, rng)[0] == 2;
    const double p = dt / (1 - t);
    CHECK(std::abs(unmasked / double(n) - p) < 4 * std::sqrt(p * (1 - p) / n));
  }

  TEST_CASE("sample_token follows softmax") {
    Rng rng(33);
    const std::vector<double> logits{0.0, std::log(3.0)};
    int second = 0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) second += sample_token(logits, rng) == 2;
    CHECK(std::abs(second / double(n) - 0.75) < 0.01);
    CHECK_THROWS(sample_token(std::vector<double>{}, rng));
  }
}

TEST_SUITE("losses") {
  TEST_CASE("velocity loss is the MSE minus the target energy") {
    ad::Tape tape;
    auto b = tape.leaf(ad::Tensor({2, 2}, {1.0, 2.0, -1.0, 0.5}));
    auto v = tape.constant(ad::Tensor({2, 2}, {0.5, 1.0, 1.0, 1.0}));
    const double mse = ((0.25 + 1.0) + (4.0 + 0.25)) / 2, energy = ((0.25 + 1.0) + 2.0) / 2;
    auto loss = velocity_loss(b, v);
    CHECK(loss.item() == doctest::Approx(mse - energy));
    tape.backward(loss);
    CHECK(b.grad()[0] == doctest::Approx(2 * (1.0 - 0.5) / 2));
  }

  TEST_CASE("denoiser and species losses") {
    ad::Tape tape;
    auto zp = tape.leaf(ad::Tensor({1, 2}, {0.5, -1.0}));
    auto z = tape.constant(ad::Tensor({1, 2}, {1.0, 1.0}));
    CHECK(denoiser_loss(zp, z).item() == doctest::Approx(0.25 + 1.0 - 2 * (0.5 - 1.0)));
    auto logits = tape.leaf(ad::Tensor({2, 3}, {0.0, 0.0, 0.0, 1.0, 2.0, 3.0}));
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(species_loss(logits, {1, 2}).item() == doctest::Approx((std::log(3.0) + (lse - 3.0)) / 2));
  }

  TEST_CASE("antithetic pair is symmetric about the mean path") {
    InterpolantSpec s;
    s.gamma_kind = GammaKind::LatentSqrt;
    const std::vector<double> x0{0.1, -2.0}, x1{1.5, 0.3}, z{0.7, -1.1};
    const auto p = antithetic_pair(s, x0, x1, z, 0.3);
    const auto c = coefficients(s, 0.3);
    for (int d = 0; d < 2; ++d) {
      CHECK(p.plus[d] - p.minus[d] == doctest::Approx(2 * c.gamma * z[d]));
      CHECK((p.plus[d] + p.minus[d]) / 2 == doctest::Approx(c.alpha * x0[d] + c.beta * x1[d]).epsilon(1e-15));
    }
  }

  TEST_CASE("weights are normalised over active terms") {
    LossWeights w;
    w.coord_velocity = 3.0;
    w.species = 4.0;
    LossTerms t;
    t.species = true;
    const auto n = normalize_weights(w, t);
    CHECK(n.coord_velocity == doctest::Approx(3.0 / 8));
    CHECK(n.lattice_velocity == doctest::Approx(1.0 / 8));
    CHECK(n.species == doctest::Approx(4.0 / 8));
    CHECK(n.coord_denoiser == 0.0);
    w.species = -1.0;
    CHECK_THROWS(normalize_weights(w, t));
  }

  TEST_CASE("total loss requires every active part") {
    ad::Tape tape;
    LossParts parts;
    parts.coord_velocity = tape.leaf(ad::Tensor::scalar(2.0));
    LossTerms t;
    CHECK_THROWS(total_loss(parts, {}, t));
    parts.lattice_velocity = tape.leaf(ad::Tensor::scalar(4.0));
    CHECK(total_loss(parts, {}, t).item() == doctest::Approx(3.0));
  }
}
