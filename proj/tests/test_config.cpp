#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "crysi/config.hpp"

using namespace crysi;
using nlohmann::json;

namespace {

std::string issues_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    std::string all;
    for (const auto& i : e.issues()) all += i + "\n";
    return all;
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("TOML subset") {
    const json j = parse_toml(R"(
# comment
[run]
task = "dng"   # trailing comment
seed = 12
[train]
lr = 3e-3
cosine_decay = true
weights.species = 2
[interpolant.coords]
family = "trig"
[misc]
list = [1, 2.5, "x"]
)");
    CHECK(j["run"]["task"] == "dng");
    CHECK(j["run"]["seed"] == 12);
    CHECK(j["train"]["lr"].get<double>() == 3e-3);
    CHECK(j["train"]["cosine_decay"] == true);
    CHECK(j["train"]["weights"]["species"] == 2);
    CHECK(j["interpolant"]["coords"]["family"] == "trig");
    CHECK(j["misc"]["list"].size() == 3);
    CHECK_THROWS_AS(parse_toml("[run\nseed = 1"), ConfigError);
    CHECK_THROWS_AS(parse_toml("seed = "), ConfigError);
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2"), ConfigError);
  }

  TEST_CASE("parse, serialise, parse is the identity") {
    RunConfig c;
    c.train.task = Task::Dng;
    c.train.seed = 77;
    c.train.lr = 0.1 + 0.2;  // not exactly representable in short decimal
    c.train.coords.family = Family::EncDec;
    c.train.coords.gamma_kind = GammaKind::EncDecGamma;
    c.train.coords.t_switch = 1.0 / 3.0;
    c.network.denoisers = true;
    c.generation.coords.scheme = Scheme::Sde;
    c.generation.coords.eps.c = 0.25;
    c.generation.species.eta = 0.5;
    c.train_path = "data/train.json";
    const json j = config_to_json(c);
    CHECK(config_from_json(j) == c);
    CHECK(config_from_json(parse_toml(to_toml(j))) == c);
    CHECK(config_to_json(config_from_json(parse_toml(to_toml(j)))) == j);
  }

  TEST_CASE("unknown keys and type errors name the field") {
    json j = config_to_json(RunConfig{});
    j["train"]["lrate"] = 0.1;
    CHECK(issues_of([&] { config_from_json(j); }).find("train.lrate") != std::string::npos);
    j = config_to_json(RunConfig{});
    j["network"]["hidden"] = "wide";
    CHECK(issues_of([&] { config_from_json(j); }).find("network.hidden") != std::string::npos);
    j = config_to_json(RunConfig{});
    j["interpolant"]["coords"]["family"] = "spline";
    CHECK(issues_of([&] { config_from_json(j); }).find("interpolant.coords.family") != std::string::npos);
  }

  TEST_CASE("generate.seed falls back to run.seed") {
    const RunConfig c = config_from_json(parse_toml("[run]\nseed = 31\n"));
    CHECK(c.generation.seed == 31);
    const RunConfig d = config_from_json(parse_toml("[run]\nseed = 31\n[generate]\nseed = 4\n"));
    CHECK(d.generation.seed == 4);
  }

  TEST_CASE("overrides") {
    json j = parse_toml("[train]\nepochs = 5\n");
    apply_override(j, "train.epochs=7");
    apply_override(j, "interpolant.coords.family = trig");
    apply_override(j, "data.train=\"x.json\"");
    CHECK(j["train"]["epochs"] == 7);
    CHECK(j["interpolant"]["coords"]["family"] == "trig");
    CHECK(j["data"]["train"] == "x.json");
    CHECK_THROWS_AS(apply_override(j, "train.epochs"), ConfigError);
  }

  TEST_CASE("cross-field validation") {
    RunConfig c;
    c.generation.coords.scheme = Scheme::Sde;
    const std::string msg = issues_of([&] { validate_config(c); });
    CHECK(msg.find("generate.coords.scheme") != std::string::npos);
    CHECK(msg.find("gamma(t) > 0") != std::string::npos);
    CHECK(msg.find("denoiser") != std::string::npos);

    c = {};
    CHECK(issues_of([&] { validate_config(c, "train"); }).find("data.train") != std::string::npos);
    c.train_path = "/nonexistent/train.json";
    CHECK(issues_of([&] { validate_config(c, "train"); }).find("does not exist") != std::string::npos);
    c = {};
    c.evaluate.tol.stol = -1;
    CHECK(issues_of([&] { validate_config(c); }).find("evaluate") != std::string::npos);
    CHECK(issues_of([&] { validate_config(RunConfig{}); }).empty());
  }

  TEST_CASE("documents load by extension") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto tp = dir / "crysi_cfg_test.toml", jp = dir / "crysi_cfg_test.json";
    std::ofstream(tp) << "[run]\nseed = 3\n";
    std::ofstream(jp) << R"({"run": {"seed": 3}})";
    CHECK(load_config_document(tp) == load_config_document(jp));
    std::ofstream(jp) << "{";
    CHECK_THROWS_AS(load_config_document(jp), ConfigError);
    std::filesystem::remove(tp);
    std::filesystem::remove(jp);
  }
}
