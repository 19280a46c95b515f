#include "crysi/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace crysi {

namespace {

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error("invalid configuration:\n  " + join(issues, "\n  ")), issues_(std::move(issues)) {}

bool RunConfig::operator==(const RunConfig& o) const { return config_to_json(*this) == config_to_json(o); }

// ---------------------------------------------------------------------------
// TOML subset

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str && c == '\\') {
      ++i;
      continue;
    }
    if (c == '"') in_str = !in_str;
    if (c == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> split_key(const std::string& key, const std::string& where) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) {
    p = trim(p);
    if (p.empty()) throw ConfigError({where + ": empty key segment in '" + key + "'"});
    for (char c : p)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        throw ConfigError({where + ": invalid key '" + key + "'"});
    parts.push_back(p);
  }
  if (parts.empty()) throw ConfigError({where + ": missing key"});
  return parts;
}

nlohmann::json parse_value(const std::string& raw, const std::string& where);

std::vector<std::string> split_array_items(const std::string& body, const std::string& where) {
  std::vector<std::string> items;
  int depth = 0;
  bool in_str = false;
  std::string cur;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (in_str) {
      cur += c;
      if (c == '\\' && i + 1 < body.size()) cur += body[++i];
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      items.push_back(trim(cur));
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (in_str || depth != 0) throw ConfigError({where + ": unbalanced array"});
  if (!trim(cur).empty()) items.push_back(trim(cur));
  return items;
}

nlohmann::json parse_value(const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError({where + ": missing value"});
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError({where + ": unterminated string"});
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      char c = v[i];
      if (c == '\\') {
        if (i + 2 >= v.size()) throw ConfigError({where + ": dangling escape"});
        c = v[++i];
        switch (c) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: throw ConfigError({where + ": unsupported escape \\" + std::string(1, c)});
        }
      } else if (c == '"') {
        throw ConfigError({where + ": unexpected quote inside string"});
      } else {
        out += c;
      }
    }
    return out;
  }
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError({where + ": unterminated array"});
    auto arr = nlohmann::json::array();
    for (const auto& item : split_array_items(v.substr(1, v.size() - 2), where)) arr.push_back(parse_value(item, where));
    return arr;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string num;
  for (char c : v)
    if (c != '_') num += c;
  {
    long long i = 0;
    const char* b = num.data() + (num.front() == '+' ? 1 : 0);
    const auto r = std::from_chars(b, num.data() + num.size(), i);
    if (r.ec == std::errc() && r.ptr == num.data() + num.size()) return i;
  }
  if (num == "inf" || num == "+inf") return std::numeric_limits<double>::infinity();
  if (num == "-inf") return -std::numeric_limits<double>::infinity();
  if (num == "nan" || num == "+nan" || num == "-nan") return std::numeric_limits<double>::quiet_NaN();
  {
    double d = 0.0;
    const char* b = num.data() + (num.front() == '+' ? 1 : 0);
    const auto r = std::from_chars(b, num.data() + num.size(), d);
    if (r.ec == std::errc() && r.ptr == num.data() + num.size()) return d;
  }
  throw ConfigError({where + ": cannot parse value '" + v + "'"});
}

nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, const std::string& where) {
  nlohmann::json* cur = &root;
  for (const auto& p : path) {
    if (!cur->contains(p)) (*cur)[p] = nlohmann::json::object();
    cur = &(*cur)[p];
    if (!cur->is_object()) throw ConfigError({where + ": '" + p + "' is both a value and a table"});
  }
  return *cur;
}

std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  std::string s = buf;
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string toml_value(const nlohmann::json& v) {
  if (v.is_string()) {
    std::string out = "\"";
    for (char c : v.get<std::string>()) {
      if (c == '"' || c == '\\') out += '\\';
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      if (c == '\t') {
        out += "\\t";
        continue;
      }
      out += c;
    }
    return out + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_value(v[i]);
    return out + "]";
  }
  throw std::invalid_argument("to_toml: unsupported value " + v.dump());
}

void emit_table(std::ostringstream& out, const nlohmann::json& obj, const std::string& path) {
  bool header = path.empty();
  for (const auto& [k, v] : obj.items()) {
    if (v.is_object() || v.is_null()) continue;
    if (!header) {
      out << "\n[" << path << "]\n";
      header = true;
    }
    out << k << " = " << toml_value(v) << '\n';
  }
  for (const auto& [k, v] : obj.items())
    if (v.is_object()) emit_table(out, v, path.empty() ? k : path + "." + k);
}

}  // namespace

nlohmann::json parse_toml(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  std::vector<std::string> table;
  std::set<std::string> seen_tables;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno);
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.size() < 3 || s.back() != ']' || s[1] == '[') throw ConfigError({where + ": malformed table header"});
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!seen_tables.insert(name).second) throw ConfigError({where + ": table [" + name + "] defined twice"});
      table = split_key(name, where);
      descend(root, table, where);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError({where + ": expected key = value"});
    auto key = split_key(trim(s.substr(0, eq)), where);
    const std::string leaf = key.back();
    key.pop_back();
    std::vector<std::string> full = table;
    full.insert(full.end(), key.begin(), key.end());
    nlohmann::json& obj = descend(root, full, where);
    if (obj.contains(leaf)) throw ConfigError({where + ": duplicate key '" + leaf + "'"});
    obj[leaf] = parse_value(s.substr(eq + 1), where);
  }
  return root;
}

std::string to_toml(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("to_toml: document must be an object");
  std::ostringstream out;
  emit_table(out, doc, "");
  std::string s = out.str();
  if (!s.empty() && s.front() == '\n') s.erase(0, 1);
  return s;
}

// ---------------------------------------------------------------------------
// Document <-> RunConfig

namespace {

class Reader {
 public:
  Reader(const nlohmann::json* obj, std::string path, std::vector<std::string>& issues)
      : obj_(obj), path_(std::move(path)), issues_(issues) {
    if (obj_ && !obj_->is_object()) {
      issues_.push_back(path_ + ": expected a table");
      obj_ = nullptr;
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  ~Reader() {
    if (!obj_) return;
    for (const auto& [k, _] : obj_->items())
      if (!used_.count(k)) issues_.push_back(name(k) + ": unknown key");
  }

  Reader child(const std::string& key) {
    used_.insert(key);
    const nlohmann::json* c = obj_ && obj_->contains(key) ? &obj_->at(key) : nullptr;
    return Reader(c, name(key), issues_);
  }

  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }

  void read(const std::string& key, double& out) {
    if (auto v = get(key)) {
      if (v->is_number()) out = v->get<double>();
      else issues_.push_back(name(key) + ": expected a number");
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto v = get(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else issues_.push_back(name(key) + ": expected true or false");
    }
  }
  void read(const std::string& key, std::string& out) {
    if (auto v = get(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else issues_.push_back(name(key) + ": expected a string");
    }
  }
  void read(const std::string& key, int& out) {
    if (auto v = get(key)) {
      if (v->is_number_integer()) out = v->get<int>();
      else issues_.push_back(name(key) + ": expected an integer");
    }
  }
  void read(const std::string& key, std::size_t& out) {
    if (auto v = get(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0))
        out = v->get<std::size_t>();
      else issues_.push_back(name(key) + ": expected a non-negative integer");
    }
  }
  template <class E, class Parse>
  void read_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (!has(key)) {
      used_.insert(key);
      return;
    }
    read(key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      issues_.push_back(name(key) + ": " + e.what());
    }
  }

 private:
  const nlohmann::json* get(const std::string& key) {
    used_.insert(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json* obj_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> used_;
};

CoordBase parse_coord_base(const std::string& s) {
  if (s == "uniform") return CoordBase::Uniform;
  if (s == "wrapped_normal") return CoordBase::WrappedNormal;
  throw std::invalid_argument("unknown coordinate base '" + s + "' (expected uniform or wrapped_normal)");
}

std::string to_string(CoordBase b) { return b == CoordBase::Uniform ? "uniform" : "wrapped_normal"; }

RateNormalizer parse_normalizer(const std::string& s) {
  if (s == "support") return RateNormalizer::Support;
  if (s == "vocabulary") return RateNormalizer::Vocabulary;
  throw std::invalid_argument("unknown rate normalizer '" + s + "' (expected support or vocabulary)");
}

EtaConvention parse_eta_convention(const std::string& s) {
  if (s == "squared") return EtaConvention::Squared;
  if (s == "linear") return EtaConvention::Linear;
  throw std::invalid_argument("unknown eta convention '" + s + "' (expected squared or linear)");
}

void read_interpolant(Reader r, InterpolantSpec& s) {
  r.read_enum("family", s.family, parse_family);
  r.read_enum("gamma", s.gamma_kind, parse_gamma_kind);
  r.read("a", s.a);
  r.read("t_switch", s.t_switch);
  r.read("p", s.p);
  r.read("sigma0", s.sigma0);
  r.read_enum("schedule", s.schedule, parse_schedule);
  r.read("beta_min", s.beta_min);
  r.read("beta_max", s.beta_max);
  r.read("cos_offset", s.cos_offset);
  r.read("sigma_min", s.sigma_min);
  r.read("sigma_max", s.sigma_max);
  r.read("time_clamp", s.time_clamp);
}

nlohmann::json interpolant_json(const InterpolantSpec& s) {
  return {{"family", to_string(s.family)},   {"gamma", to_string(s.gamma_kind)}, {"a", s.a},
          {"t_switch", s.t_switch},          {"p", s.p},                         {"sigma0", s.sigma0},
          {"schedule", to_string(s.schedule)}, {"beta_min", s.beta_min},       {"beta_max", s.beta_max},
          {"cos_offset", s.cos_offset},      {"sigma_min", s.sigma_min},         {"sigma_max", s.sigma_max},
          {"time_clamp", s.time_clamp}};
}

void read_group(Reader r, GroupGeneration& g) {
  r.read_enum("scheme", g.scheme, parse_scheme);
  r.read("c", g.eps.c);
  r.read("mu", g.eps.mu);
  r.read("sigma", g.eps.sigma);
  r.read("anneal", g.anneal);
}

nlohmann::json group_json(const GroupGeneration& g) {
  return {{"scheme", to_string(g.scheme)}, {"c", g.eps.c}, {"mu", g.eps.mu}, {"sigma", g.eps.sigma},
          {"anneal", g.anneal}};
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  std::vector<std::string> issues;
  {
    Reader root(&doc, "", issues);
    bool generate_seed_given = false;
    {
      Reader r = root.child("run");
      r.read_enum("task", c.train.task, parse_task);
      r.read("seed", c.train.seed);
      r.read("threads", c.threads);
    }
    {
      Reader r = root.child("data");
      r.read("train", c.train_path);
      r.read("val", c.val_path);
      r.read("test", c.test_path);
    }
    root.child("output").read("dir", c.output_dir);
    {
      Reader r = root.child("network");
      r.read("n_real", c.network.n_real);
      r.read("layers", c.network.layers);
      r.read("hidden", c.network.hidden);
      r.read("embed", c.network.embed);
      r.read("fourier", c.network.fourier);
      r.read("time_freqs", c.network.time_freqs);
      r.read("denoisers", c.network.denoisers);
      r.read("composition_only", c.network.composition_only);
      r.read("lattice_scale", c.network.lattice_scale);
    }
    {
      Reader r = root.child("train");
      auto& t = c.train;
      r.read("epochs", t.epochs);
      r.read("batch_size", t.batch_size);
      r.read("lr", t.lr);
      r.read("weight_decay", t.weight_decay);
      r.read("beta1", t.beta1);
      r.read("beta2", t.beta2);
      r.read("adam_eps", t.adam_eps);
      r.read("cosine_decay", t.cosine_decay);
      r.read("lr_floor", t.lr_floor);
      r.read("grad_clip", t.grad_clip);
      r.read("coupling", t.coupling);
      r.read("antithetic", t.antithetic);
      r.read("random_translation", t.random_translation);
      Reader w = r.child("weights");
      w.read("coord_velocity", t.weights.coord_velocity);
      w.read("coord_denoiser", t.weights.coord_denoiser);
      w.read("lattice_denoiser", t.weights.lattice_denoiser);
      w.read("species", t.weights.species);
    }
    {
      Reader r = root.child("interpolant");
      read_interpolant(r.child("coords"), c.train.coords);
      read_interpolant(r.child("lattice"), c.train.lattice);
    }
    {
      Reader r = root.child("base");
      r.read_enum("coords", c.coord_base, parse_coord_base);
      r.read("coord_sigma", c.coord_sigma);
    }
    {
      Reader r = root.child("generate");
      auto& g = c.generation;
      r.read("steps", g.steps);
      r.read("count", c.count);
      generate_seed_given = r.has("seed");
      r.read("seed", g.seed);
      r.read("diffusion_prefactor", g.diffusion_prefactor);
      r.read("eta", g.species.eta);
      r.read_enum("normalizer", g.species.normalizer, parse_normalizer);
      r.read_enum("eta_convention", g.species.eta_convention, parse_eta_convention);
      read_group(r.child("coords"), g.coords);
      read_group(r.child("lattice"), g.lattice);
    }
    {
      Reader r = root.child("evaluate");
      r.read("stol", c.evaluate.tol.stol);
      r.read("ltol", c.evaluate.tol.ltol);
      r.read("angletol", c.evaluate.tol.angletol);
      r.read("min_dist", c.evaluate.min_dist);
      r.read("cn_cutoff", c.evaluate.cn_cutoff);
    }
    if (!generate_seed_given) c.generation.seed = c.train.seed;
  }
  if (!issues.empty()) throw ConfigError(issues);
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& g = c.generation;
  nlohmann::json j;
  j["run"] = {{"task", to_string(t.task)}, {"seed", t.seed}, {"threads", c.threads}};
  j["data"] = {{"train", c.train_path}, {"val", c.val_path}, {"test", c.test_path}};
  j["output"] = {{"dir", c.output_dir}};
  j["network"] = {{"n_real", c.network.n_real},       {"layers", c.network.layers},
                  {"hidden", c.network.hidden},       {"embed", c.network.embed},
                  {"fourier", c.network.fourier},     {"time_freqs", c.network.time_freqs},
                  {"denoisers", c.network.denoisers}, {"composition_only", c.network.composition_only},
                  {"lattice_scale", c.network.lattice_scale}};
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"weight_decay", t.weight_decay},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"cosine_decay", t.cosine_decay},
                {"lr_floor", t.lr_floor},
                {"grad_clip", t.grad_clip},
                {"coupling", t.coupling},
                {"antithetic", t.antithetic},
                {"random_translation", t.random_translation},
                {"weights",
                 {{"coord_velocity", t.weights.coord_velocity},
                  {"coord_denoiser", t.weights.coord_denoiser},
                  {"lattice_denoiser", t.weights.lattice_denoiser},
                  {"species", t.weights.species}}}};
  j["interpolant"] = {{"coords", interpolant_json(t.coords)}, {"lattice", interpolant_json(t.lattice)}};
  j["base"] = {{"coords", to_string(c.coord_base)}, {"coord_sigma", c.coord_sigma}};
  j["generate"] = {{"steps", g.steps},
                   {"count", c.count},
                   {"seed", g.seed},
                   {"diffusion_prefactor", g.diffusion_prefactor},
                   {"eta", g.species.eta},
                   {"normalizer", g.species.normalizer == RateNormalizer::Support ? "support" : "vocabulary"},
                   {"eta_convention", g.species.eta_convention == EtaConvention::Squared ? "squared" : "linear"},
                   {"coords", group_json(g.coords)},
                   {"lattice", group_json(g.lattice)}};
  j["evaluate"] = {{"stol", c.evaluate.tol.stol},
                   {"ltol", c.evaluate.tol.ltol},
                   {"angletol", c.evaluate.tol.angletol},
                   {"min_dist", c.evaluate.min_dist},
                   {"cn_cutoff", c.evaluate.cn_cutoff}};
  return j;
}

nlohmann::json load_config_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"config: cannot open '" + path.string() + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError({"config: JSON parse error at byte " + std::to_string(e.byte)});
    }
  }
  return parse_toml(ss.str());
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError({"override '" + assignment + "': expected key=value"});
  auto path = split_key(trim(assignment.substr(0, eq)), "override '" + assignment + "'");
  const std::string leaf = path.back();
  path.pop_back();
  const std::string raw = trim(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = parse_value(raw, "override");
  } catch (const ConfigError&) {
    value = raw;
  }
  descend(doc, path, "override '" + assignment + "'")[leaf] = value;
}

void validate_config(const RunConfig& c, const std::string& command) {
  std::vector<std::string> issues;
  auto guard = [&](const std::string& field, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      issues.push_back(field + ": " + e.what());
    }
  };
  guard("network", [&] { check_network_config(c.network); });
  guard("interpolant.coords", [&] { check_parameters(c.train.coords); });
  guard("interpolant.lattice", [&] { check_parameters(c.train.lattice); });
  guard("train", [&] { check_train_config(c.train, c.network); });
  guard("generate", [&] { check_generation_config(c.generation); });
  guard("evaluate", [&] { check_tolerances(c.evaluate.tol); });
  if (!(c.evaluate.min_dist > 0.0)) issues.push_back("evaluate.min_dist: must be > 0");
  if (!(c.evaluate.cn_cutoff > 0.0)) issues.push_back("evaluate.cn_cutoff: must be > 0");
  if (c.coord_base == CoordBase::WrappedNormal && !(c.coord_sigma > 0.0))
    issues.push_back("base.coord_sigma: must be > 0 for a wrapped-normal base");
  if (c.threads < 1) issues.push_back("run.threads: must be >= 1");

  const std::pair<const char*, std::pair<const GroupGeneration*, const InterpolantSpec*>> groups[] = {
      {"coords", {&c.generation.coords, &c.train.coords}}, {"lattice", {&c.generation.lattice, &c.train.lattice}}};
  for (const auto& [name, g] : groups) {
    if (g.first->scheme != Scheme::Sde) continue;
    const std::string field = std::string("generate.") + name + ".scheme";
    if (g.second->gamma_kind == GammaKind::None)
      issues.push_back(field + ": SDE sampling requires gamma(t) > 0, but interpolant." + name + ".gamma is none");
    if (!c.network.denoisers)
      issues.push_back(field + ": SDE sampling requires denoiser heads (network.denoisers = true)");
  }

  if (command == "train") {
    if (c.train_path.empty()) issues.push_back("data.train: a training set path is required");
    else if (!std::filesystem::exists(c.train_path))
      issues.push_back("data.train: file '" + c.train_path + "' does not exist");
    if (!c.val_path.empty() && !std::filesystem::exists(c.val_path))
      issues.push_back("data.val: file '" + c.val_path + "' does not exist");
  }
  if (command == "generate" && c.train.task == Task::Csp && c.test_path.empty())
    issues.push_back("data.test: CSP generation needs compositions (a structure file)");
  if (!issues.empty()) throw ConfigError(issues);
}

}  // namespace crysi
