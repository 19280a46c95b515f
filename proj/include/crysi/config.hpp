#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crysi/coupling.hpp"
#include "crysi/interpolants.hpp"
#include "crysi/metrics.hpp"
#include "crysi/network.hpp"
#include "crysi/sampling.hpp"
#include "crysi/train.hpp"

namespace crysi {

// Invalid configuration; every issue names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct RunConfig {
  std::size_t threads = 1;
  std::string train_path, val_path, test_path;
  std::string output_dir = "out";
  NetworkConfig network;
  TrainConfig train;  // task, seed and the interpolants live here
  CoordBase coord_base = CoordBase::Uniform;
  double coord_sigma = 1.0;
  GenerationConfig generation;
  std::size_t count = 100;
  EvalOptions evaluate;

  bool operator==(const RunConfig& o) const;
};

// ---------------------------------------------------------------------------
// Text formats. Both map onto the same nested JSON document:
//   [run] task seed threads          [data] train val test     [output] dir
//   [network] ...   [train] ... [train.weights] ...
//   [interpolant.coords] ... [interpolant.lattice] ...   [base] coords coord_sigma
//   [generate] ... [generate.coords] ... [generate.lattice] ...   [evaluate] ...
//
// The TOML subset covers tables, dotted keys, strings, booleans, integers,
// floats, flat arrays and # comments.

nlohmann::json parse_toml(const std::string& text);
std::string to_toml(const nlohmann::json& doc);

// Unknown keys and wrongly typed values are reported as ConfigError.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);

// Reads .json files as JSON and anything else as TOML.
nlohmann::json load_config_document(const std::filesystem::path& path);

// "section.key=value" overrides; the value is parsed as a TOML value, falling
// back to a bare string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Field-level and cross-field checks for a command ("train", "generate",
// "evaluate" or "" for command-independent checks). Throws ConfigError.
void validate_config(const RunConfig& cfg, const std::string& command = "");

}  // namespace crysi
