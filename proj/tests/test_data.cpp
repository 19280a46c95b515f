#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "crysi/data.hpp"

using namespace crysi;

TEST_SUITE("data") {
  TEST_CASE("toy datasets are deterministic and valid") {
    for (auto kind : {ToyKind::PerovskiteLike, ToyKind::TorusGaussianMixture, ToyKind::TwoSpeciesChain}) {
      ToyDatasetSpec spec;
      spec.kind = kind;
      spec.n_structures = 50;
      spec.seed = 3;
      const Dataset a = generate_toy_dataset(spec), b = generate_toy_dataset(spec);
      CHECK(a.structures == b.structures);
      for (const auto& s : a.structures) CHECK_NOTHROW(check_invariants(s));
      spec.seed = 4;
      CHECK_FALSE(generate_toy_dataset(spec).structures == a.structures);
    }
  }

  TEST_CASE("split is a 60/20/20 partition") {
    ToyDatasetSpec spec;
    spec.n_structures = 100;
    const Dataset d = generate_toy_dataset(spec);
    CHECK(d.split.train.size() == 60);
    CHECK(d.split.val.size() == 20);
    CHECK(d.split.test.size() == 20);
    std::set<std::size_t> all(d.split.train.begin(), d.split.train.end());
    all.insert(d.split.val.begin(), d.split.val.end());
    all.insert(d.split.test.begin(), d.split.test.end());
    CHECK(all.size() == 100);
  }

  TEST_CASE("perovskite cells hold one A, one B and three O") {
    ToyDatasetSpec spec;
    spec.n_structures = 30;
    for (const auto& s : generate_toy_dataset(spec).structures) {
      REQUIRE(s.size() == 5);
      const auto& a = perovskite_a_sites();
      const auto& b = perovskite_b_sites();
      CHECK(std::count(s.species.begin(), s.species.end(), kOxygen) == 3);
      CHECK(std::count_if(s.species.begin(), s.species.end(),
                          [&](int z) { return std::find(a.begin(), a.end(), z) != a.end(); }) == 1);
      CHECK(std::count_if(s.species.begin(), s.species.end(),
                          [&](int z) { return std::find(b.begin(), b.end(), z) != b.end(); }) == 1);
    }
  }

  TEST_CASE("mixture atoms sit near distinct modes") {
    ToyDatasetSpec spec;
    spec.kind = ToyKind::TorusGaussianMixture;
    spec.n_structures = 20;
    spec.atoms_per_cell = 4;
    const auto modes = mixture_modes(4);
    for (const auto& s : generate_toy_dataset(spec).structures) {
      std::set<std::size_t> used;
      for (const auto& x : s.coords) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < modes.size(); ++m)
          if (torus_distance(x, modes[m]) < torus_distance(x, modes[best])) best = m;
        CHECK(torus_distance(x, modes[best]) < 0.1);
        used.insert(best);
      }
      CHECK(used.size() == 4);
    }
  }

  TEST_CASE("files round-trip exactly") {
    ToyDatasetSpec spec;
    spec.n_structures = 10;
    const auto d = generate_toy_dataset(spec);
    CHECK(parse_structures(serialize_structures(d.structures)) == d.structures);
    const auto path = std::filesystem::temp_directory_path() / "crysi_data_roundtrip.json";
    save_structures(path, d.structures);
    CHECK(load_structures(path) == d.structures);
    std::filesystem::remove(path);
    CHECK(parse_structures("[]").empty());
  }

  TEST_CASE("parse errors name the byte or the record") {
    try {
      parse_structures("[{\"species\": [1], ");
      FAIL("expected a parse error");
    } catch (const StructureFileError& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    const std::string bad =
        R"([{"species":[1],"coords":[[0,0,0]],"lattice":[[3,0,0],[0,3,0],[0,0,3]]},)"
        R"({"species":[1,2],"coords":[[0,0,0]],"lattice":[[3,0,0],[0,3,0],[0,0,3]]}])";
    try {
      parse_structures(bad);
      FAIL("expected a record error");
    } catch (const StructureFileError& e) {
      CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    }
    CHECK_THROWS_AS(load_structures("/nonexistent/file.json"), StructureFileError);
  }

  TEST_CASE("stats and spec serialisation") {
    ToyDatasetSpec spec;
    spec.kind = ToyKind::TwoSpeciesChain;
    spec.n_structures = 12;
    spec.atoms_per_cell = 6;
    const auto d = generate_toy_dataset(spec);
    const auto st = dataset_stats(d.structures);
    CHECK(st.atom_counts.size() == 1);
    CHECK(st.atom_counts.at(6) == 12);
    CHECK(st.species_frequency.at(3) == doctest::Approx(0.5));
    CHECK(stats_to_json(st).contains("atom_counts"));
    CHECK(toy_spec_from_json(toy_spec_to_json(spec)) == spec);
    CHECK(manifest_json(d).contains("split"));
    CHECK(parse_toy_kind(to_string(ToyKind::TorusGaussianMixture)) == ToyKind::TorusGaussianMixture);
    CHECK_THROWS(parse_toy_kind("graphene"));
  }
}
