#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crysi/coupling.hpp"
#include "crysi/structure.hpp"

namespace crysi {

enum class ToyKind { TorusGaussianMixture, PerovskiteLike, TwoSpeciesChain };

std::string to_string(ToyKind k);
ToyKind parse_toy_kind(const std::string& s);

struct ToyDatasetSpec {
  ToyKind kind = ToyKind::PerovskiteLike;
  std::size_t n_structures = 2000;
  // Atoms per cell for the mixture and chain toys; perovskite cells hold 5.
  std::size_t atoms_per_cell = 4;
  double coord_noise = 0.01;    // fractional-coordinate jitter (std)
  double lattice_noise = 0.02;  // log-normal spread of cell lengths
  std::uint64_t seed = 0;

  bool operator==(const ToyDatasetSpec&) const = default;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

struct Dataset {
  ToyDatasetSpec spec;
  std::vector<Structure> structures;
  Split split;

  std::vector<Structure> subset(const std::vector<std::size_t>& idx) const;
};

// Deterministic given spec.seed; 60-20-20 split over shuffled indices.
Dataset generate_toy_dataset(const ToyDatasetSpec& spec);

// Element palettes of the perovskite toy.
const std::vector<int>& perovskite_a_sites();
const std::vector<int>& perovskite_b_sites();
inline constexpr int kOxygen = 8;
inline constexpr int kMixtureElement = 6;
// Mode centres of the torus mixture toy (one atom per mode).
std::vector<Vec3> mixture_modes(std::size_t n);

class StructureFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors name the byte offset (syntax) or record index (content).
std::vector<Structure> load_structures(const std::filesystem::path& path, int n_elements = kDefaultElements);
std::vector<Structure> parse_structures(const std::string& text, int n_elements = kDefaultElements);
void save_structures(const std::filesystem::path& path, const std::vector<Structure>& structures);
std::string serialize_structures(const std::vector<Structure>& structures);

struct DatasetStats {
  std::map<std::size_t, std::size_t> atom_counts;
  BaseDistributionSpec lattice_fit;
  std::map<int, double> species_frequency;
};

DatasetStats dataset_stats(const std::vector<Structure>& structures);
nlohmann::json stats_to_json(const DatasetStats& stats);

nlohmann::json toy_spec_to_json(const ToyDatasetSpec& spec);
ToyDatasetSpec toy_spec_from_json(const nlohmann::json& j);
nlohmann::json manifest_json(const Dataset& d);

}  // namespace crysi
