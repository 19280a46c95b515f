#include <doctest.h>

#include <cmath>

#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

using namespace crysi;

namespace {

Structure cubic(double a, std::vector<int> species, std::vector<Vec3> coords) {
  Structure s;
  s.species = std::move(species);
  s.coords = std::move(coords);
  s.lattice = {Vec3{a, 0, 0}, Vec3{0, a, 0}, Vec3{0, 0, a}};
  return s;
}

Mat3 random_lattice(Rng& rng) {
  const double pi = 3.14159265358979323846;
  return lattice_from_parameters({rng.uniform(2, 6), rng.uniform(2, 6), rng.uniform(2, 6)},
                                 {rng.uniform(70, 110) * pi / 180, rng.uniform(70, 110) * pi / 180,
                                  rng.uniform(70, 110) * pi / 180});
}

// Shortest image distance over a wide block of cell offsets.
double brute_distance(const Vec3& x0, const Vec3& x1, const Mat3& l, bool skip_zero) {
  double best = INFINITY;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j)
      for (int k = -3; k <= 3; ++k) {
        if (skip_zero && i == 0 && j == 0 && k == 0) continue;
        best = std::min(best, norm(to_cartesian({x1[0] + i - x0[0], x1[1] + j - x0[1], x1[2] + k - x0[2]}, l)));
      }
  return best;
}

}  // namespace

TEST_SUITE("structures") {
  TEST_CASE("wrap maps into [0, 1)") {
    CHECK(wrap(1.0) == 0.0);
    CHECK(wrap(-0.25) == 0.75);
    CHECK(wrap(2.5) == 0.5);
    CHECK(wrap(-1e-18) < 1.0);
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
      const double w = wrap(rng.uniform(-50, 50));
      REQUIRE(w >= 0.0);
      REQUIRE(w < 1.0);
    }
  }

  TEST_CASE("nearest image keeps the in-box image on half-box ties") {
    CHECK(nearest_image_unwrap(0.0, 0.5) == 0.5);
    CHECK(nearest_image_unwrap(0.9, 0.1) == doctest::Approx(1.1));
    CHECK(nearest_image_unwrap(0.1, 0.9) == doctest::Approx(-0.1));
  }

  TEST_CASE("torus displacement is antisymmetric and bounded") {
    Rng rng(4);
    for (int n = 0; n < 5000; ++n) {
      const Vec3 a{rng.uniform(), rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform(), rng.uniform()};
      const Vec3 d = torus_displacement(a, b), e = torus_displacement(b, a);
      for (int k = 0; k < 3; ++k) {
        REQUIRE(std::abs(d[k]) <= 0.5);
        if (std::abs(d[k]) < 0.5) REQUIRE(d[k] == doctest::Approx(-e[k]).epsilon(1e-12));
      }
      REQUIRE(torus_distance(a, b) == doctest::Approx(torus_distance(b, a)).epsilon(1e-12));
    }
  }

  TEST_CASE("periodic distance equals a wide image search on skewed cells") {
    Rng rng(5);
    for (int n = 0; n < 500; ++n) {
      const Mat3 l = random_lattice(rng);
      const Vec3 a{rng.uniform(), rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform(), rng.uniform()};
      REQUIRE(periodic_distance(a, b, l) == doctest::Approx(brute_distance(a, b, l, false)).epsilon(1e-12));
      REQUIRE(periodic_distance(a, a, l, true) == doctest::Approx(brute_distance(a, a, l, true)).epsilon(1e-12));
    }
  }

  TEST_CASE("lattice parameters round-trip") {
    Rng rng(6);
    for (int n = 0; n < 100; ++n) {
      const Mat3 l = random_lattice(rng);
      const Vec3 len = lattice_lengths(l), ang = lattice_angles_deg(l);
      const double pi = 3.14159265358979323846;
      const Mat3 back = lattice_from_parameters(len, {ang[0] * pi / 180, ang[1] * pi / 180, ang[2] * pi / 180});
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) REQUIRE(back[i][j] == doctest::Approx(l[i][j]).epsilon(1e-12));
      REQUIRE(volume(l) == doctest::Approx(std::abs(det(l))));
    }
    const Mat3 c = lattice_from_parameters({2, 3, 4}, {M_PI / 2, M_PI / 2, M_PI / 2});
    CHECK(volume(c) == doctest::Approx(24.0));
  }

  TEST_CASE("invariants name the violated condition") {
    CHECK_NOTHROW(check_invariants(cubic(3, {1, 2}, {{0, 0, 0}, {0.5, 0.5, 0.5}})));
    CHECK_THROWS_AS(check_invariants(cubic(3, {1}, {{0, 0, 0}, {0.5, 0.5, 0.5}})), InvariantError);
    CHECK_THROWS_AS(check_invariants(cubic(3, {1}, {{1.0, 0, 0}})), InvariantError);
    CHECK_THROWS_AS(check_invariants(cubic(3, {101}, {{0, 0, 0}})), InvariantError);
    CHECK_THROWS_AS(check_invariants(cubic(0, {1}, {{0, 0, 0}})), InvariantError);
    CHECK_THROWS_AS(check_invariants(cubic(3, {1}, {{NAN, 0, 0}})), InvariantError);
  }

  TEST_CASE("JSON round trip is exact") {
    Rng rng(7);
    Structure s;
    s.lattice = random_lattice(rng);
    for (int i = 0; i < 6; ++i) {
      s.species.push_back(1 + static_cast<int>(rng.index(100)));
      s.coords.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    CHECK(structure_from_json(nlohmann::json::parse(to_json(s).dump())) == s);
    auto bad = to_json(s);
    bad["coords"].erase(0);
    CHECK_THROWS(structure_from_json(bad));
  }
}
