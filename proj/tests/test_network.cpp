#include <doctest.h>

#include <cmath>

#include "crysi/network.hpp"
#include "crysi/rng.hpp"

using namespace crysi;

namespace {

NetworkConfig small_net() {
  NetworkConfig c;
  c.n_real = 12;
  c.layers = 2;
  c.hidden = 16;
  c.embed = 4;
  c.fourier = 2;
  c.time_freqs = 2;
  c.denoisers = true;
  return c;
}

Structure sample_structure(Rng& rng, std::size_t n) {
  Structure s;
  for (std::size_t i = 0; i < n; ++i) {
    s.species.push_back(1 + static_cast<int>(rng.index(12)));
    s.coords.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  s.lattice = {Vec3{4.0, 0.1, 0.0}, Vec3{0.2, 3.5, 0.0}, Vec3{0.0, 0.3, 5.0}};
  return s;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("feature layouts") {
    const auto tf = time_features(0.25, 2);
    REQUIRE(tf.size() == 5);
    CHECK(tf[0] == 0.25);
    CHECK(tf[1] == doctest::Approx(std::sin(M_PI * 0.25)));
    CHECK(pair_features({0.1, 0.2, 0.3}, 3).size() == 18);
    Rng rng(41);
    const ModelParams p = init_params(small_net(), rng);
    const Structure s = sample_structure(rng, 4);
    const Features f = featurize(p, s, 0.5);
    CHECK(f.pair.rows() == 12);
    CHECK(f.lattice.size() == 9);
  }

  TEST_CASE("outputs are permutation equivariant") {
    Rng rng(42);
    const ModelParams p = init_params(small_net(), rng);
    const Structure s = sample_structure(rng, 5);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Structure q = s;
    for (std::size_t i = 0; i < 5; ++i) {
      q.species[i] = s.species[perm[i]];
      q.coords[i] = s.coords[perm[i]];
    }
    const Prediction a = predict(p, s, 0.3), b = predict(p, q, 0.3);
    for (std::size_t i = 0; i < 5; ++i)
      for (int d = 0; d < 3; ++d) {
        REQUIRE(b.b_x[i][d] == doctest::Approx(a.b_x[perm[i]][d]).epsilon(1e-10));
        REQUIRE(b.z_x[i][d] == doctest::Approx(a.z_x[perm[i]][d]).epsilon(1e-10));
      }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) REQUIRE(b.b_l[r][c] == doctest::Approx(a.b_l[r][c]).epsilon(1e-10));
  }

  TEST_CASE("outputs are invariant to a global fractional translation") {
    Rng rng(43);
    const ModelParams p = init_params(small_net(), rng);
    const Structure s = sample_structure(rng, 4);
    Structure q = s;
    for (auto& x : q.coords) x = wrap(Vec3{x[0] + 0.37, x[1] - 0.21, x[2] + 0.9});
    const Prediction a = predict(p, s, 0.6), b = predict(p, q, 0.6);
    for (std::size_t i = 0; i < 4; ++i)
      for (int d = 0; d < 3; ++d) REQUIRE(b.b_x[i][d] == doctest::Approx(a.b_x[i][d]).epsilon(1e-9));
    for (std::size_t k = 0; k < a.logits.size(); ++k) REQUIRE(b.logits[k] == doctest::Approx(a.logits[k]).epsilon(1e-9));
  }

  TEST_CASE("centre-of-mass removal") {
    const auto r = remove_com(std::vector<Vec3>{{1, 2, 3}, {3, 2, 1}});
    CHECK(r[0] == Vec3{-1, 0, 1});
  }

  TEST_CASE("batched and single predictions agree") {
    Rng rng(45);
    const ModelParams p = init_params(small_net(), rng);
    const std::vector<Structure> batch{sample_structure(rng, 3), sample_structure(rng, 5), sample_structure(rng, 1)};
    const std::vector<double> times{0.1, 0.5, 0.9};
    const auto all = predict(p, batch, times);
    for (std::size_t k = 0; k < 3; ++k) {
      const Prediction one = predict(p, batch[k], times[k]);
      for (std::size_t i = 0; i < batch[k].size(); ++i)
        for (int d = 0; d < 3; ++d) REQUIRE(all[k].b_x[i][d] == doctest::Approx(one.b_x[i][d]).epsilon(1e-12));
    }
  }

  TEST_CASE("checkpoint round trip and shape manifest") {
    Rng rng(46);
    const ModelParams p = init_params(small_net(), rng);
    const nlohmann::json meta{{"seed", 46}};
    const auto j = checkpoint_to_json(p, meta);
    nlohmann::json back_meta;
    const ModelParams q = checkpoint_from_json(nlohmann::json::parse(j.dump()), &back_meta);
    CHECK(back_meta == meta);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t k = 0; k < p.tensors.size(); ++k) CHECK(q.tensors[k].value.data == p.tensors[k].value.data);
    CHECK(checkpoint_to_json(q, meta).dump() == j.dump());

    auto broken = j;
    broken["config"]["hidden"] = 17;
    CHECK_THROWS(checkpoint_from_json(broken));
  }

  TEST_CASE("invalid network configs are rejected") {
    NetworkConfig c = small_net();
    c.hidden = 0;
    CHECK_THROWS(check_network_config(c));
    c = small_net();
    c.lattice_scale = 0.0;
    CHECK_THROWS(check_network_config(c));
  }
}
