#include <doctest.h>

#include <cmath>

#include "crysi/data.hpp"
#include "crysi/train.hpp"

using namespace crysi;

namespace {

NetworkConfig tiny_net() {
  NetworkConfig c;
  c.n_real = 60;
  c.layers = 1;
  c.hidden = 16;
  c.embed = 4;
  c.fourier = 2;
  c.time_freqs = 2;
  return c;
}

std::vector<Structure> toy(std::size_t n, ToyKind kind = ToyKind::PerovskiteLike) {
  ToyDatasetSpec spec;
  spec.kind = kind;
  spec.n_structures = n;
  spec.seed = 8;
  return generate_toy_dataset(spec).structures;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("one AdamW step against a hand computation") {
    ModelParams p;
    p.tensors.push_back({"w", ad::Tensor({2}, {1.0, -2.0})});
    AdamState st = init_adam(p);
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    const std::vector<std::vector<double>> g{{0.5, -0.25}};
    adam_update(p, st, g, cfg);
    // Bias-corrected first step moves each weight by lr * sign(g) (up to eps),
    // plus the decoupled decay lr * wd * w.
    for (int i = 0; i < 2; ++i) {
      const double w0 = i == 0 ? 1.0 : -2.0, gi = g[0][i];
      const double m = (1 - 0.9) * gi / (1 - 0.9), v = (1 - 0.999) * gi * gi / (1 - 0.999);
      const double expected = w0 - 0.1 * (m / (std::sqrt(v) + 1e-8) + 0.01 * w0);
      CHECK(p.tensors[0].value.data[i] == doctest::Approx(expected).epsilon(1e-14));
    }
    CHECK(st.step == 1);
  }

  TEST_CASE("active terms follow task, heads and gamma") {
    TrainConfig cfg;
    NetworkConfig net = tiny_net();
    auto t = active_terms(cfg, net);
    CHECK(t.coord_velocity);
    CHECK_FALSE(t.species);
    CHECK_FALSE(t.coord_denoiser);
    cfg.task = Task::Dng;
    net.denoisers = true;
    cfg.coords.gamma_kind = GammaKind::LatentSqrt;
    t = active_terms(cfg, net);
    CHECK(t.species);
    CHECK(t.coord_denoiser);
    CHECK_FALSE(t.lattice_denoiser);
    cfg.task = Task::Cfp;
    net.composition_only = true;
    t = active_terms(cfg, net);
    CHECK(t.species);
    CHECK_FALSE(t.coord_velocity);
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    NetworkConfig net = tiny_net();
    CHECK_NOTHROW(check_train_config(cfg, net));
    cfg.task = Task::Cfp;
    CHECK_THROWS(check_train_config(cfg, net));
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS(check_train_config(cfg, net));
    cfg = {};
    cfg.lr = -1;
    CHECK_THROWS(check_train_config(cfg, net));
    cfg = {};
    cfg.grad_clip = -0.5;
    CHECK_THROWS(check_train_config(cfg, net));
  }

  TEST_CASE("gradient clipping rescales to the global norm") {
    std::vector<std::vector<double>> g{{3.0, 0.0}, {4.0}};
    clip_gradients(g, 10.0);
    CHECK(g[1][0] == 4.0);
    clip_gradients(g, 0.0);
    CHECK(g[0][0] == 3.0);
    clip_gradients(g, 1.0);
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(g[1][0] == doctest::Approx(0.8));
  }

  TEST_CASE("training is deterministic and reduces the loss") {
    const auto data = toy(64);
    const auto base = fit_lattice_base(data);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    cfg.seed = 4;
    Rng rng(1);
    const ModelParams init = init_params(tiny_net(), rng);
    const double before = evaluate_loss(init, data, cfg, base, 99).total;
    const TrainResult a = train(init, data, {}, cfg, base);
    const TrainResult b = train(init, data, {}, cfg, base);
    CHECK(a.log.size() == 6);
    for (std::size_t k = 0; k < a.best.tensors.size(); ++k)
      REQUIRE(a.best.tensors[k].value.data == b.best.tensors[k].value.data);
    CHECK(evaluate_loss(a.best, data, cfg, base, 99).total < before);
    const std::string csv = loss_log_csv(a.log);
    CHECK(csv.rfind("epoch,total,coord_velocity", 0) == 0);
  }

  TEST_CASE("DNG and latent-term batches carry every active part") {
    const auto data = toy(8, ToyKind::TorusGaussianMixture);
    const auto base = fit_lattice_base(data);
    NetworkConfig net = tiny_net();
    net.denoisers = true;
    TrainConfig cfg;
    cfg.task = Task::Dng;
    cfg.coords.gamma_kind = GammaKind::LatentSqrt;
    cfg.lattice.gamma_kind = GammaKind::LatentSqrt;
    cfg.coupling = true;
    Rng rng(2);
    const ModelParams p = init_params(net, rng);
    ad::Tape tape;
    const auto bp = bind(tape, p);
    const BatchLoss bl = batch_loss(tape, p, bp, data, cfg, base, rng);
    CHECK(bl.parts.coord_velocity.has_value());
    CHECK(bl.parts.coord_denoiser.has_value());
    CHECK(bl.parts.lattice_denoiser.has_value());
    CHECK(bl.parts.species.has_value());
    CHECK(std::isfinite(bl.total.item()));
  }

  TEST_CASE("a non-finite loss stops training with the batch and terms") {
    const auto data = toy(8);
    const auto base = fit_lattice_base(data);
    Rng rng(3);
    ModelParams p = init_params(tiny_net(), rng);
    p.tensors.back().value.data[0] = NAN;
    p.tensors[1].value.data[0] = NAN;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    try {
      train(p, data, {}, cfg, base);
      FAIL("expected TrainError");
    } catch (const TrainError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("batch 0") != std::string::npos);
      CHECK(msg.find("coord_velocity") != std::string::npos);
    }
  }

  TEST_CASE("closed-form Gaussian marginals") {
    InterpolantSpec s;
    s.gamma_kind = GammaKind::LatentSqrt;
    s.a = 0.07;
    const auto r = closed_form_sanity(s, 0.5, 2.0, 1.0, 100000, 5);
    CHECK(r.expected_mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.expected_var == doctest::Approx(0.5175).epsilon(1e-14));
    CHECK(r.ok);
    CHECK(closed_form_sanity(InterpolantSpec{}, 0.0, 2.0, 1.0, 100000, 6).ok);
  }
}
