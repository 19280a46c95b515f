#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crysi/data.hpp"
#include "crysi/hungarian.hpp"
#include "crysi/metrics.hpp"
#include "crysi/rng.hpp"

using namespace crysi;

namespace {

Structure cubic(double a, std::vector<int> species, std::vector<Vec3> coords) {
  Structure s;
  s.species = std::move(species);
  s.coords = std::move(coords);
  s.lattice = {Vec3{a, 0, 0}, Vec3{0, a, 0}, Vec3{0, 0, a}};
  return s;
}

Structure rocksalt() {
  return cubic(5.6, {11, 11, 11, 11, 17, 17, 17, 17},
               {{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5},
                {0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 0.5}, {0.5, 0.5, 0.5}});
}

// Transport LP between uniform empirical measures, solved as an assignment
// between copies replicated to a common size.
double w1_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t m = std::lcm(a.size(), b.size());
  std::vector<double> cost(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = std::abs(a[i / (m / a.size())] - b[j / (m / b.size())]);
  return solve_assignment(cost, m).cost / static_cast<double>(m);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("matching is invariant to permutation, translation and small noise") {
    const Structure ref = rocksalt();
    Structure gen = ref;
    std::reverse(gen.species.begin(), gen.species.end());
    std::reverse(gen.coords.begin(), gen.coords.end());
    for (auto& x : gen.coords) x = wrap(Vec3{x[0] + 0.13, x[1] + 0.71, x[2] - 0.3});
    const auto r = match_pair(gen, ref);
    CHECK(r.matched);
    CHECK(*r.rmse < 1e-9);

    Rng rng(61);
    Structure noisy = ref;
    for (auto& x : noisy.coords) x = wrap(Vec3{x[0] + 0.01 * rng.normal(), x[1] + 0.01 * rng.normal(), x[2]});
    noisy.lattice[0][0] *= 1.05;
    const auto n = match_pair(noisy, ref);
    CHECK(n.matched);
    CHECK(*n.rmse > 0.0);
    CHECK(*n.rmse < 0.1);
  }

  TEST_CASE("gates reject composition, lattice and site mismatches") {
    const Structure ref = rocksalt();
    Structure other = ref;
    other.species[0] = 19;
    CHECK_FALSE(match_pair(other, ref).matched);
    CHECK_FALSE(match_pair(other, ref).rmse.has_value());

    Structure stretched = ref;
    stretched.lattice[2][2] *= 1.6;
    CHECK_FALSE(match_pair(stretched, ref).matched);

    Structure sheared = ref;
    sheared.lattice = lattice_from_parameters({5.6, 5.6, 5.6}, {M_PI / 2, M_PI / 2, 105.0 * M_PI / 180});
    CHECK_FALSE(match_pair(sheared, ref).matched);

    // Moving every Cl onto the Na sublattice's interstitials breaks the sites.
    Structure scrambled = ref;
    for (std::size_t i = 4; i < 8; ++i) scrambled.coords[i] = wrap(Vec3{ref.coords[i][0] + 0.25, ref.coords[i][1] + 0.25, ref.coords[i][2] + 0.25});
    CHECK_FALSE(match_pair(scrambled, ref, {0.1, 0.3, 10}).matched);
  }

  TEST_CASE("disjoint compositions give a zero match rate") {
    const std::vector<Structure> a{cubic(3, {1, 2}, {{0, 0, 0}, {0.5, 0.5, 0.5}})};
    const std::vector<Structure> b{cubic(3, {3, 4}, {{0, 0, 0}, {0.5, 0.5, 0.5}})};
    const auto m = match_rate(a, b);
    CHECK(m.rate == 0.0);
    CHECK_FALSE(m.mean_rmse.has_value());
    CHECK_THROWS(match_rate(a, std::vector<Structure>{}));
  }

  TEST_CASE("every toy matches itself") {
    for (auto kind : {ToyKind::PerovskiteLike, ToyKind::TorusGaussianMixture, ToyKind::TwoSpeciesChain}) {
      ToyDatasetSpec spec;
      spec.kind = kind;
      spec.n_structures = 40;
      spec.seed = 5;
      const auto d = generate_toy_dataset(spec);
      const auto m = match_rate(d.structures, d.structures);
      CHECK(m.rate == 1.0);
      CHECK(*m.mean_rmse == 0.0);
    }
  }

  TEST_CASE("structural validity counts self images") {
    CHECK(structural_validity(cubic(3, {1, 1}, {{0, 0, 0}, {0.5, 0.5, 0.5}}), 0.5));
    CHECK_FALSE(structural_validity(cubic(3, {1, 1}, {{0, 0, 0}, {0.05, 0, 0}}), 0.5));
    CHECK_FALSE(structural_validity(cubic(0.4, {1}, {{0, 0, 0}}), 0.5));
    CHECK_FALSE(structural_validity(cubic(3, {1, 1}, {{0, 0, 0}, {0.95, 0.0, 0.0}}), 0.5));
  }

  TEST_CASE("properties of simple cells") {
    const auto& masses = standard_masses();
    CHECK(masses[8] == doctest::Approx(15.999).epsilon(1e-3));
    const Structure sc = cubic(2.5, {14}, {{0, 0, 0}});
    const Properties p = properties(sc, masses, 3.0);
    CHECK(p.mean_cn == 6.0);
    CHECK(p.n_ary == 1);
    CHECK(p.density == doctest::Approx(masses[14] / 15.625));
    // fcc nearest neighbours at a / sqrt(2).
    const Structure fcc = cubic(4.0, {29, 29, 29, 29}, {{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}});
    CHECK(mean_coordination(fcc, 3.0) == 12.0);
    CHECK(properties(rocksalt(), masses, 3.0).n_ary == 2);
    // A cell much smaller than the cutoff still counts every image.
    CHECK(mean_coordination(cubic(1.0, {1}, {{0, 0, 0}}), 1.5) == 18.0);
  }

  TEST_CASE("W1 against the transport LP") {
    CHECK(wasserstein1(std::vector<double>{0.0}, std::vector<double>{1.0}) == 1.0);
    CHECK(wasserstein1(std::vector<double>{0, 1}, std::vector<double>{0, 1, 2, 3}) == doctest::Approx(1.0));
    CHECK_THROWS(wasserstein1(std::vector<double>{}, std::vector<double>{1.0}));
    Rng rng(62);
    for (int inst = 0; inst < 200; ++inst) {
      std::vector<double> a(1 + rng.index(8)), b(1 + rng.index(8));
      for (auto& v : a) v = std::round(rng.normal() * 4) / 4;
      for (auto& v : b) v = rng.normal();
      REQUIRE(wasserstein1(a, b) == doctest::Approx(w1_oracle(a, b)).epsilon(1e-12));
      REQUIRE(wasserstein1(a, a) == 0.0);
      REQUIRE(wasserstein1(a, b) == doctest::Approx(wasserstein1(b, a)).epsilon(1e-14));
    }
  }

  TEST_CASE("evaluation report and histograms") {
    std::vector<Structure> ref{rocksalt(), cubic(2.5, {14}, {{0, 0, 0}})};
    std::vector<Structure> gen{rocksalt(), cubic(2.5, {6}, {{0, 0, 0}})};
    const EvalOptions opt;
    const EvalReport r = evaluate(gen, ref, opt);
    CHECK(r.match_rate == 0.5);
    CHECK(r.validity_rate == 1.0);
    CHECK(r.w1_density > 0.0);
    CHECK(r.w1_n_ary == 0.0);
    const std::string csv = report_csv(r);
    CHECK(csv.rfind("id,matched,rmse,valid,rho,n_ary,mean_cn\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto summary = report_summary(r, opt);
    for (const char* k : {"match_rate", "mean_rmse", "validity_rate", "w1_density", "w1_n_ary", "w1_cutoff_cn"})
      CHECK(summary.contains(k));
    const std::string h = histogram_csv(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2}, 4);
    std::istringstream in(h);
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin_lo,bin_hi,generated,reference");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
  }

  TEST_CASE("tolerance validation") {
    CHECK_THROWS(check_tolerances({-0.1, 0.3, 10}));
    CHECK_THROWS(check_tolerances({0.5, 0.3, 200}));
  }
}
