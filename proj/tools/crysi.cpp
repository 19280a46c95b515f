#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crysi/checks.hpp"
#include "crysi/config.hpp"
#include "crysi/data.hpp"
#include "crysi/metrics.hpp"
#include "crysi/network.hpp"
#include "crysi/sampling.hpp"
#include "crysi/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crysi;

namespace {

constexpr int kOk = 0;
constexpr int kInvalidConfig = 2;
constexpr int kIncompatible = 3;
constexpr int kParseError = 4;

// Carries an exit code out of a command.
struct Exit {
  int code;
  std::string message;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

std::vector<Structure> load_or_exit(const std::string& path) {
  try {
    return load_structures(path);
  } catch (const StructureFileError& e) {
    throw Exit{kParseError, path + ": " + e.what()};
  }
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json base_to_json(const BaseDistributionSpec& b) {
  return {{"coords", b.coord_kind == CoordBase::Uniform ? "uniform" : "wrapped_normal"},
          {"coord_sigma", b.coord_sigma},
          {"log_mean", vec_json(b.log_mean)},
          {"log_std", vec_json(b.log_std)},
          {"angle_lo", vec_json(b.angle_lo)},
          {"angle_hi", vec_json(b.angle_hi)}};
}

BaseDistributionSpec base_from_json(const json& j) {
  BaseDistributionSpec b;
  b.coord_kind = j.at("coords").get<std::string>() == "uniform" ? CoordBase::Uniform : CoordBase::WrappedNormal;
  b.coord_sigma = j.at("coord_sigma").get<double>();
  b.log_mean = vec_from(j.at("log_mean"));
  b.log_std = vec_from(j.at("log_std"));
  b.angle_lo = vec_from(j.at("angle_lo"));
  b.angle_hi = vec_from(j.at("angle_hi"));
  check_base_spec(b);
  return b;
}

// Defaults < config file < --set overrides < CRYSI_THREADS (only when the file
// leaves run.threads unset) < dedicated command-line flags.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& command) {
  json doc;
  try {
    doc = load_config_document(path);
    for (const auto& o : overrides) apply_override(doc, o);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  RunConfig cfg = config_from_json(doc);
  const bool threads_given = doc.contains("run") && doc["run"].contains("threads");
  if (!threads_given)
    if (const char* env = std::getenv("CRYSI_THREADS")) {
      try {
        cfg.threads = std::stoul(env);
      } catch (const std::exception&) {
        throw ConfigError({"CRYSI_THREADS: expected a positive integer, got '" + std::string(env) + "'"});
      }
    }
  validate_config(cfg, command);
  return cfg;
}

// ---------------------------------------------------------------------------

struct DatasetArgs {
  std::string kind = "perovskite_like";
  std::size_t n = 2000;
  std::size_t atoms = 4;
  double coord_noise = 0.01;
  double lattice_noise = 0.02;
  std::uint64_t seed = 0;
  std::string out = "data";
};

int cmd_dataset(const DatasetArgs& a) {
  ToyDatasetSpec spec;
  try {
    spec.kind = parse_toy_kind(a.kind);
  } catch (const std::exception& e) {
    throw Exit{kInvalidConfig, std::string("--kind: ") + e.what()};
  }
  spec.n_structures = a.n;
  spec.atoms_per_cell = a.atoms;
  spec.coord_noise = a.coord_noise;
  spec.lattice_noise = a.lattice_noise;
  spec.seed = a.seed;
  const Dataset d = generate_toy_dataset(spec);
  const fs::path out(a.out);
  fs::create_directories(out);
  save_structures(out / "train.json", d.subset(d.split.train));
  save_structures(out / "val.json", d.subset(d.split.val));
  save_structures(out / "test.json", d.subset(d.split.test));
  write_text(out / "manifest.json", manifest_json(d).dump(2) + "\n");
  std::cout << "wrote " << d.split.train.size() << "/" << d.split.val.size() << "/" << d.split.test.size()
            << " train/val/test structures of " << a.kind << " to " << out.string() << "\n";
  return kOk;
}

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
};

int cmd_train(const ConfigArgs& a) {
  const RunConfig cfg = load_run_config(a.config, a.overrides, "train");
  const auto train_set = load_or_exit(cfg.train_path);
  const std::vector<Structure> val_set = cfg.val_path.empty() ? std::vector<Structure>{} : load_or_exit(cfg.val_path);
  if (train_set.empty()) throw Exit{kInvalidConfig, "data.train: the training set is empty"};

  const DatasetStats stats = dataset_stats(train_set);
  BaseDistributionSpec base = stats.lattice_fit;
  base.coord_kind = cfg.coord_base;
  base.coord_sigma = cfg.coord_sigma;

  Rng init(cfg.train.seed);
  const ModelParams params = init_params(cfg.network, init);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult tr = train(params, train_set, val_set, cfg.train, base, [](const EpochLog& l) {
    std::cout << "epoch " << l.epoch << " train " << l.train.total << " val " << l.val_total << "\n";
  });
  const double secs = seconds_since(t0);

  json hist = json::object();
  for (const auto& [n, c] : stats.atom_counts) hist[std::to_string(n)] = c;
  const json metadata = {{"config", config_to_json(cfg)},
                         {"base", base_to_json(base)},
                         {"atom_counts", hist},
                         {"seed", cfg.train.seed},
                         {"best_epoch", tr.best_epoch},
                         {"best_val", tr.best_val}};
  const fs::path out(cfg.output_dir);
  write_text(out / "checkpoint.json", checkpoint_to_json(tr.best, metadata).dump() + "\n");
  write_text(out / "loss_log.csv", loss_log_csv(tr.log));
  std::cout << "trained " << cfg.train.epochs << " epochs in " << secs << " s, best epoch " << tr.best_epoch
            << " (val " << tr.best_val << "), seed " << cfg.train.seed << ", checkpoint "
            << (out / "checkpoint.json").string() << "\n";
  return kOk;
}

struct GenerateArgs {
  ConfigArgs cfg;
  std::string checkpoint;
  std::string task;
  long count = -1;
  std::string compositions;
  std::string out;
  std::string trajectory;
};

int cmd_generate(const GenerateArgs& a) {
  RunConfig cfg = load_run_config(a.cfg.config, a.cfg.overrides, "");
  if (!a.task.empty()) {
    try {
      cfg.train.task = parse_task(a.task);
    } catch (const std::exception& e) {
      throw Exit{kInvalidConfig, std::string("--task: ") + e.what()};
    }
  }
  if (!a.compositions.empty()) cfg.test_path = a.compositions;
  validate_config(cfg, "generate");
  if (cfg.train.task == Task::Cfp)
    throw Exit{kInvalidConfig, "run.task: generation supports csp and dng; cfp models are trained only"};

  json metadata;
  GenerativeModel model;
  try {
    model.params = checkpoint_from_json(read_json(a.checkpoint), &metadata);
    const RunConfig trained = config_from_json(metadata.at("config"));
    model.coords = trained.train.coords;
    model.lattice = trained.train.lattice;
    model.base = base_from_json(metadata.at("base"));
    if (!(model.params.config == cfg.network))
      throw std::runtime_error("network section differs from the checkpoint's network");
    if (!(model.coords == cfg.train.coords) || !(model.lattice == cfg.train.lattice))
      throw std::runtime_error("interpolant section differs from the one the checkpoint was trained with");
    if (trained.train.task != cfg.train.task)
      throw std::runtime_error("checkpoint was trained for task " + to_string(trained.train.task) + ", not " +
                               to_string(cfg.train.task));
    check_compatible(model, cfg.generation);
  } catch (const std::exception& e) {
    throw Exit{kIncompatible, "incompatible checkpoint " + a.checkpoint + ": " + e.what()};
  }

  std::ofstream traj;
  if (!a.trajectory.empty()) {
    if (fs::path(a.trajectory).has_parent_path()) fs::create_directories(fs::path(a.trajectory).parent_path());
    traj.open(a.trajectory);
    if (!traj) throw std::runtime_error("cannot write " + a.trajectory);
  }
  TrajectoryFn record;
  if (traj.is_open())
    record = [&](std::size_t i, double t, const Structure& s) {
      traj << json{{"index", i}, {"t", t}, {"structure", to_json(s)}}.dump() << "\n";
    };

  const std::size_t count = a.count >= 0 ? static_cast<std::size_t>(a.count) : cfg.count;
  const auto t0 = std::chrono::steady_clock::now();
  GenerationResult g;
  if (cfg.train.task == Task::Csp) {
    const auto refs = load_or_exit(cfg.test_path);
    std::vector<std::vector<int>> comps;
    for (std::size_t i = 0; i < count && !refs.empty(); ++i) comps.push_back(refs[i % refs.size()].species);
    g = generate_csp(model, cfg.generation, comps, record, static_cast<int>(cfg.threads));
  } else {
    std::map<std::size_t, std::size_t> hist;
    for (const auto& [n, c] : metadata.at("atom_counts").items()) hist[std::stoul(n)] = c.get<std::size_t>();
    Rng rng(cfg.generation.seed ^ 0xa70c0a7ULL);
    const auto counts = count ? sample_atom_counts(hist, count, rng) : std::vector<std::size_t>{};
    g = generate_dng(model, cfg.generation, counts, record, static_cast<int>(cfg.threads));
  }
  const double secs = seconds_since(t0);

  const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) / "generated.json" : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_structures(out, g.structures);
  const json summary = {{"task", to_string(cfg.train.task)},  {"requested", count},
                        {"generated", g.structures.size()},  {"nan_aborts", g.aborted.size()},
                        {"aborted", g.aborted},              {"source_index", g.source_index},
                        {"seed", cfg.generation.seed},       {"steps", cfg.generation.steps},
                        {"wall_seconds", secs}};
  fs::path summary_path = out;
  summary_path.replace_extension(".summary.json");
  write_text(summary_path, summary.dump(2) + "\n");
  for (const auto& msg : g.aborted) std::cerr << "aborted: " << msg << "\n";
  std::cout << "generated " << g.structures.size() << "/" << count << " " << to_string(cfg.train.task)
            << " structures in " << secs << " s, NaN aborts " << g.aborted.size() << ", seed "
            << cfg.generation.seed << ", output " << out.string() << "\n";
  return kOk;
}

struct EvaluateArgs {
  std::string gen, ref, out = "eval", config;
  std::vector<std::string> overrides;
  std::optional<double> stol, ltol, angletol, min_dist, cn_cutoff;
};

int cmd_evaluate(const EvaluateArgs& a) {
  EvalOptions opt;
  if (!a.config.empty()) opt = load_run_config(a.config, a.overrides, "evaluate").evaluate;
  if (a.stol) opt.tol.stol = *a.stol;
  if (a.ltol) opt.tol.ltol = *a.ltol;
  if (a.angletol) opt.tol.angletol = *a.angletol;
  if (a.min_dist) opt.min_dist = *a.min_dist;
  if (a.cn_cutoff) opt.cn_cutoff = *a.cn_cutoff;
  try {
    check_tolerances(opt.tol);
  } catch (const std::exception& e) {
    throw ConfigError({std::string("evaluate: ") + e.what()});
  }
  if (!(opt.min_dist > 0.0) || !(opt.cn_cutoff > 0.0))
    throw ConfigError({"evaluate: min_dist and cn_cutoff must be > 0"});

  const auto gen = load_or_exit(a.gen);
  const auto ref = load_or_exit(a.ref);
  if (gen.size() != ref.size())
    throw Exit{kInvalidConfig, "generated (" + std::to_string(gen.size()) + ") and reference (" +
                                   std::to_string(ref.size()) + ") files must be aligned pairwise"};
  const EvalReport r = evaluate(gen, ref, opt);

  const fs::path out(a.out);
  write_text(out / "report.csv", report_csv(r));
  write_text(out / "summary.json", report_summary(r, opt).dump(2) + "\n");
  std::vector<double> dg, dr, ng, nr, cg, cr;
  for (const auto& row : r.rows) {
    dg.push_back(row.props.density);
    ng.push_back(row.props.n_ary);
    cg.push_back(row.props.mean_cn);
  }
  for (const auto& s : ref) {
    const Properties p = properties(s, standard_masses(), opt.cn_cutoff);
    dr.push_back(p.density);
    nr.push_back(p.n_ary);
    cr.push_back(p.mean_cn);
  }
  write_text(out / "hist_density.csv", histogram_csv(dg, dr));
  write_text(out / "hist_n_ary.csv", histogram_csv(ng, nr));
  write_text(out / "hist_cn.csv", histogram_csv(cg, cr));
  std::cout << "match rate " << r.match_rate << ", mean rmse "
            << (r.mean_rmse ? std::to_string(*r.mean_rmse) : std::string("n/a")) << ", validity " << r.validity_rate
            << ", W1 density " << r.w1_density << ", W1 n_ary " << r.w1_n_ary << ", W1 cn " << r.w1_cn
            << ", report in " << out.string() << "\n";
  return kOk;
}

struct CheckArgs {
  std::string inject;
  std::uint64_t seed = CheckOptions{}.seed;
  bool end_to_end = false;
};

int cmd_check(const CheckArgs& a) {
  CheckOptions opt;
  opt.seed = a.seed;
  if (!a.inject.empty()) {
    if (a.inject != "vp_cos") throw Exit{kInvalidConfig, "--inject-fault: unknown fault '" + a.inject + "'"};
    opt.corrupt_vp_cos = true;
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<CheckResult> results = run_checks(opt);
  for (const auto& r : results) std::cout << format_result(r) << std::endl;
  if (a.end_to_end) {
    EndToEndOptions e2e;
    e2e.progress = [](const std::string& m) { std::cerr << "  " << m << "\n"; };
    for (auto* run : {&run_csp_end_to_end, &run_dng_end_to_end}) {
      results.push_back(run(e2e));
      std::cout << format_result(results.back()) << std::endl;
    }
  }
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.pass;
  const double secs = seconds_since(t0);
  std::cout << results.size() - failed << "/" << results.size() << " checks passed in " << secs << " s\n";
  if (!a.end_to_end && secs > 300.0) std::cerr << "warning: check suite took longer than 5 minutes\n";
  return failed ? 1 : kOk;
}

int cmd_stats(const std::string& path) {
  const auto s = load_or_exit(path);
  json j = stats_to_json(dataset_stats(s));
  j["n_structures"] = s.size();
  std::cout << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crysi: stochastic-interpolant generative models for periodic crystals"};
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Write a toy dataset with its train/val/test split");
  dataset->add_option("--kind", ds.kind, "perovskite_like, torus_gaussian_mixture or two_species_chain");
  dataset->add_option("-n,--count", ds.n, "Number of structures");
  dataset->add_option("--atoms", ds.atoms, "Atoms per cell (mixture and chain toys)");
  dataset->add_option("--coord-noise", ds.coord_noise, "Fractional-coordinate jitter");
  dataset->add_option("--lattice-noise", ds.lattice_noise, "Log-normal spread of cell lengths");
  dataset->add_option("--seed", ds.seed);
  dataset->add_option("-o,--out", ds.out, "Output directory");

  ConfigArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("config", tr.config, "TOML or JSON config")->required();
  train_cmd->add_option("--set", tr.overrides, "section.key=value override");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Sample structures from a checkpoint");
  generate->add_option("config", gen.cfg.config, "TOML or JSON config")->required();
  generate->add_option("--checkpoint", gen.checkpoint)->required();
  generate->add_option("--set", gen.cfg.overrides, "section.key=value override");
  generate->add_option("--task", gen.task, "csp or dng (default: run.task)");
  generate->add_option("--count", gen.count, "Number of structures (default: generate.count)");
  generate->add_option("--compositions", gen.compositions, "Structure file whose species define CSP compositions");
  generate->add_option("-o,--out", gen.out, "Output structure file (default: <output.dir>/generated.json)");
  generate->add_option("--trajectory", gen.trajectory, "Write every integration state as JSON lines");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare generated structures to references");
  evaluate_cmd->add_option("--gen", ev.gen)->required();
  evaluate_cmd->add_option("--ref", ev.ref)->required();
  evaluate_cmd->add_option("-o,--out", ev.out, "Report directory");
  evaluate_cmd->add_option("--config", ev.config, "Take tolerances from the [evaluate] section");
  evaluate_cmd->add_option("--set", ev.overrides, "section.key=value override");
  evaluate_cmd->add_option("--stol", ev.stol);
  evaluate_cmd->add_option("--ltol", ev.ltol);
  evaluate_cmd->add_option("--angletol", ev.angletol);
  evaluate_cmd->add_option("--min-dist", ev.min_dist);
  evaluate_cmd->add_option("--cn-cutoff", ev.cn_cutoff);

  CheckArgs ck;
  auto* check = app.add_subcommand("check", "Run the invariant and oracle suite");
  check->add_option("--inject-fault", ck.inject, "Corrupt a component to exercise the suite (vp_cos)");
  check->add_option("--seed", ck.seed);
  check->add_flag("--end-to-end", ck.end_to_end, "Also run the CSP and DNG training runs");

  std::string stats_path;
  auto* stats = app.add_subcommand("stats", "Summarize a structure file");
  stats->add_option("file", stats_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidConfig;
  }

  try {
    if (*dataset) return cmd_dataset(ds);
    if (*train_cmd) return cmd_train(tr);
    if (*generate) return cmd_generate(gen);
    if (*evaluate_cmd) return cmd_evaluate(ev);
    if (*check) return cmd_check(ck);
    if (*stats) return cmd_stats(stats_path);
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue << "\n";
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
