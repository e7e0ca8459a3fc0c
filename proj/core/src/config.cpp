#include "mtcb/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mtcb/csv.hpp"
#include "mtcb/error.hpp"

namespace mtcb {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

/// Reads one section, tracking which keys were consumed.
class SectionReader {
 public:
  SectionReader(const ConfigSections& all, const std::string& name) : name_(name) {
    if (const auto it = all.find(name); it != all.end()) entries_ = &it->second;
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    if (!entries_) return;
    for (const auto& [key, value] : *entries_) {
      if (!used_.contains(key)) throw ConfigError(fmt::format("unknown key '{}.{}'", name_, key));
    }
  }

  const std::string* get(const std::string& key) {
    used_.insert(key);
    if (!entries_) return nullptr;
    const auto it = entries_->find(key);
    return it == entries_->end() ? nullptr : &it->second;
  }

  void read(const std::string& key, double& out) {
    if (const auto* v = get(key)) out = to_double(key, *v);
  }
  void read(const std::string& key, std::size_t& out) {
    if (const auto* v = get(key)) out = to_size(key, *v);
  }
  void read(const std::string& key, int& out) {
    if (const auto* v = get(key)) {
      const double d = to_double(key, *v);
      if (d != std::floor(d)) throw ConfigError(fmt::format("{}.{}: expected an integer", name_, key));
      out = static_cast<int>(d);
    }
  }
  void read(const std::string& key, bool& out) {
    if (const auto* v = get(key)) {
      const std::string s = trim(*v);
      if (s == "true" || s == "1" || s == "yes" || s == "on") {
        out = true;
      } else if (s == "false" || s == "0" || s == "no" || s == "off") {
        out = false;
      } else {
        throw ConfigError(fmt::format("{}.{}: expected a boolean, got '{}'", name_, key, s));
      }
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const auto* v = get(key)) out = trim(*v);
  }
  /// "auto" or empty leaves the optional unset.
  void read(const std::string& key, std::optional<double>& out) {
    if (const auto* v = get(key)) {
      const std::string s = trim(*v);
      if (s.empty() || s == "auto") {
        out.reset();
      } else {
        out = to_double(key, s);
      }
    }
  }

  double to_double(const std::string& key, const std::string& raw) const {
    const std::string s = trim(raw);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(fmt::format("{}.{}: expected a number, got '{}'", name_, key, s));
    }
    return v;
  }

  std::uint64_t to_size(const std::string& key, const std::string& raw) const {
    const std::string s = trim(raw);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError(fmt::format("{}.{}: expected a nonnegative integer, got '{}'", name_, key, s));
    }
    return v;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  const std::map<std::string, std::string>* entries_ = nullptr;
  std::set<std::string> used_;
};

std::vector<std::uint64_t> parse_seeds(SectionReader& r, const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) {
    if (const auto dots = item.find(".."); dots != std::string::npos) {
      const auto lo = r.to_size("seeds", item.substr(0, dots));
      const auto hi = r.to_size("seeds", item.substr(dots + 2));
      if (hi < lo) throw ConfigError(fmt::format("experiment.seeds: empty range '{}'", item));
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(r.to_size("seeds", item));
    }
  }
  return seeds;
}

std::string real(double v) { return format_real(v); }
std::string boolean(bool v) { return v ? "true" : "false"; }

template <class T, class F>
std::string join_mapped(const std::vector<T>& items, F f) {
  std::vector<std::string> out;
  for (const auto& i : items) out.emplace_back(f(i));
  return join(out);
}

void resolve_relative(std::filesystem::path& p, const std::filesystem::path& base) {
  if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
}

ConfigSections sections_from_ptree(const boost::property_tree::ptree& tree) {
  ConfigSections out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(fmt::format("key '{}' must live inside a section", section));
    }
    auto& entries = out[section];
    for (const auto& [key, value] : body) {
      if (!value.empty()) throw ConfigError(fmt::format("nested value under '{}.{}'", section, key));
      entries[key] = value.data();
    }
  }
  return out;
}

ConfigSections sections_from_json(const nlohmann::json& doc) {
  const nlohmann::json& root = doc.contains("config") ? doc.at("config") : doc;
  if (!root.is_object()) throw ConfigError("JSON config must be an object of sections");
  ConfigSections out;
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object()) throw ConfigError(fmt::format("JSON section '{}' must be an object", section));
    auto& entries = out[section];
    for (const auto& [key, value] : body.items()) {
      if (value.is_string()) {
        entries[key] = value.get<std::string>();
      } else if (value.is_boolean()) {
        entries[key] = boolean(value.get<bool>());
      } else if (value.is_number_integer() || value.is_number_unsigned()) {
        entries[key] = value.dump();
      } else if (value.is_number()) {
        entries[key] = real(value.get<double>());
      } else {
        throw ConfigError(fmt::format("JSON value '{}.{}' must be a scalar", section, key));
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::sim_sweep: return "sim-sweep";
    case ExperimentKind::synthetic_bandit: return "synthetic-bandit";
    case ExperimentKind::trace_bandit: return "trace-bandit";
    case ExperimentKind::theory_checks: return "theory-checks";
    case ExperimentKind::similarity: return "similarity";
  }
  return "?";
}

std::string_view to_string(SimilarityMethod method) {
  switch (method) {
    case SimilarityMethod::identity: return "identity";
    case SimilarityMethod::cke: return "cke";
    case SimilarityMethod::r2: return "r2";
    case SimilarityMethod::file: return "file";
  }
  return "?";
}

std::string_view to_string(RunMode mode) {
  return mode == RunMode::parallel ? "parallel" : "sequential";
}

std::string_view to_string(StateSource source) {
  return source == StateSource::replay ? "replay" : "sample";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (const auto k : {ExperimentKind::sim_sweep, ExperimentKind::synthetic_bandit,
                       ExperimentKind::trace_bandit, ExperimentKind::theory_checks,
                       ExperimentKind::similarity}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

SimilarityMethod parse_similarity_method(std::string_view name) {
  for (const auto m : {SimilarityMethod::identity, SimilarityMethod::cke, SimilarityMethod::r2,
                       SimilarityMethod::file}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown similarity method '" + std::string(name) + "'");
}

RunMode parse_run_mode(std::string_view name) {
  if (name == "parallel") return RunMode::parallel;
  if (name == "sequential") return RunMode::sequential;
  throw ConfigError("unknown run mode '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (horizon == 0) throw ConfigError("experiment.horizon must be at least 1");
  if (methods.empty()) throw ConfigError("experiment.methods must not be empty");
  if (modes.empty()) throw ConfigError("experiment.modes must not be empty");
  if (!(policy.beta >= 0.0)) throw ConfigError("policy.beta must be nonnegative");
  if (!(policy.lambda > 0.0)) throw ConfigError("policy.lambda must be positive");
  if (policy.lengthscale && !(*policy.lengthscale > 0.0)) {
    throw ConfigError("policy.lengthscale must be positive");
  }
  if (!(policy.output_scale > 0.0)) throw ConfigError("policy.output_scale must be positive");
  if (!(similarity.warmup_fraction > 0.0)) {
    throw ConfigError("similarity.warmup_fraction must be positive");
  }
  if (similarity.cke.lambda && !(*similarity.cke.lambda > 0.0)) {
    throw ConfigError("similarity.cke_lambda must be positive");
  }
  if (!(similarity.cke.lambda_per_point > 0.0)) {
    throw ConfigError("similarity.cke_lambda_per_point must be positive");
  }
  if (!(similarity.r2_lambda > 0.0)) throw ConfigError("similarity.r2_lambda must be positive");
  if (similarity.r2_floor > 0.0) throw ConfigError("similarity.r2_floor must be <= 0");
  const bool wants_file =
      std::find(methods.begin(), methods.end(), SimilarityMethod::file) != methods.end();
  if (wants_file && similarity.file.empty() &&
      (kind == ExperimentKind::synthetic_bandit || kind == ExperimentKind::trace_bandit)) {
    throw ConfigError("method 'file' needs similarity.file");
  }
  if (synthetic_tasks == 0) throw ConfigError("synthetic.tasks must be at least 1");
  sweep.gp.validate();
  if (sweep.draws == 0) throw ConfigError("gp.draws must be at least 1");
  if (!(sweep.grid_step > 0.0 && sweep.grid_step <= 1.0)) {
    throw ConfigError("gp.grid_step must lie in (0, 1]");
  }
  if (sweep.lambda && !(*sweep.lambda > 0.0)) throw ConfigError("gp.lambda must be positive");
  if (trace.k == 0) throw ConfigError("trace.k must be at least 1");
  if (kind == ExperimentKind::trace_bandit && trace.path.empty()) {
    throw ConfigError("trace.path is required");
  }
  if (trace.schema.action_min > trace.schema.action_max) {
    throw ConfigError("trace.action_min must not exceed trace.action_max");
  }
  if (!(trace.schema.reward_scale > 0.0)) throw ConfigError("trace.reward_scale must be positive");
  if (theory.tasks == 0 || theory.horizon == 0) {
    throw ConfigError("theory.tasks and theory.horizon must be positive");
  }
  if (!(theory.lambda > 0.0)) throw ConfigError("theory.lambda must be positive");
  for (std::size_t i = 0; i < theory.mu_grid.size(); ++i) {
    const double mu = theory.mu_grid[i];
    if (!(mu >= 0.0 && mu <= 1.0) || (i > 0 && mu < theory.mu_grid[i - 1])) {
      throw ConfigError("theory.mu_grid must be ascending values in [0, 1]");
    }
  }
}

ConfigSections to_sections(const ExperimentConfig& c) {
  ConfigSections s;
  auto& e = s["experiment"];
  e["kind"] = to_string(c.kind);
  e["horizon"] = std::to_string(c.horizon);
  e["seeds"] = join_mapped(c.seeds, [](std::uint64_t v) { return std::to_string(v); });
  e["methods"] = join_mapped(c.methods, [](SimilarityMethod m) { return std::string(to_string(m)); });
  e["modes"] = join_mapped(c.modes, [](RunMode m) { return std::string(to_string(m)); });
  e["output_dir"] = c.output_dir.string();
  e["threads"] = std::to_string(c.threads);

  auto& p = s["policy"];
  p["beta"] = real(c.policy.beta);
  p["lambda"] = real(c.policy.lambda);
  p["kernel"] = to_string(c.policy.kernel);
  p["lengthscale"] = c.policy.lengthscale ? real(*c.policy.lengthscale) : "auto";
  p["output_scale"] = real(c.policy.output_scale);
  p["refresh_interval"] = std::to_string(c.policy.model.refresh_interval);
  p["check_residual"] = boolean(c.policy.model.check_residual_on_refresh);

  auto& m = s["similarity"];
  m["method"] = to_string(c.similarity.method);
  m["warmup_fraction"] = real(c.similarity.warmup_fraction);
  m["cke_lambda"] = c.similarity.cke.lambda ? real(*c.similarity.cke.lambda) : "auto";
  m["cke_lambda_per_point"] = real(c.similarity.cke.lambda_per_point);
  m["r2_lambda"] = real(c.similarity.r2_lambda);
  m["r2_floor"] = real(c.similarity.r2_floor);
  m["max_points_per_task"] = std::to_string(c.similarity.max_points_per_task);
  m["psd_projection"] = boolean(c.similarity.psd_projection);
  m["file"] = c.similarity.file.string();

  s["synthetic"]["tasks"] = std::to_string(c.synthetic_tasks);

  auto& g = s["gp"];
  g["tasks"] = std::to_string(c.sweep.gp.tasks);
  g["points_per_task"] = std::to_string(c.sweep.gp.points_per_task);
  g["sim_g"] = real(c.sweep.gp.sim_g);
  g["lengthscale"] = real(c.sweep.gp.lengthscale);
  g["noise_variance"] = real(c.sweep.gp.noise_variance);
  g["train_size"] = std::to_string(c.sweep.gp.train_size);
  g["shared_design"] = boolean(c.sweep.gp.shared_design);
  g["seed"] = std::to_string(c.sweep.gp.seed);
  g["draws"] = std::to_string(c.sweep.draws);
  g["grid_step"] = real(c.sweep.grid_step);
  g["lambda"] = c.sweep.lambda ? real(*c.sweep.lambda) : "auto";

  auto& t = s["trace"];
  t["path"] = c.trace.path.string();
  t["k"] = std::to_string(c.trace.k);
  t["stations"] = join(c.trace.stations);
  t["max_stations"] = std::to_string(c.trace.max_stations);
  t["state_source"] = to_string(c.trace.source);
  t["bs_id_column"] = c.trace.schema.bs_id;
  t["state_columns"] = join({c.trace.schema.state.begin(), c.trace.schema.state.end()});
  t["action_column"] = c.trace.schema.action;
  t["reward_column"] = c.trace.schema.reward;
  t["reward_scale"] = real(c.trace.schema.reward_scale);
  t["action_min"] = std::to_string(c.trace.schema.action_min);
  t["action_max"] = std::to_string(c.trace.schema.action_max);

  auto& th = s["theory"];
  th["tasks"] = std::to_string(c.theory.tasks);
  th["horizon"] = std::to_string(c.theory.horizon);
  th["rank_instances"] = std::to_string(c.theory.rank_instances);
  th["monotonicity_sets"] = std::to_string(c.theory.monotonicity_sets);
  th["lambda"] = real(c.theory.lambda);
  th["mu_grid"] = join_mapped(c.theory.mu_grid, [](double v) { return real(v); });
  return s;
}

ExperimentConfig from_sections(const ConfigSections& sections) {
  static const std::set<std::string> known = {"experiment", "policy", "similarity", "synthetic",
                                              "gp", "trace", "theory"};
  for (const auto& [name, body] : sections) {
    if (!known.contains(name)) throw ConfigError(fmt::format("unknown section '{}'", name));
  }

  ExperimentConfig c;
  {
    SectionReader r(sections, "experiment");
    if (const auto* v = r.get("kind")) c.kind = parse_experiment_kind(trim(*v));
    r.read("horizon", c.horizon);
    if (const auto* v = r.get("seeds")) c.seeds = parse_seeds(r, *v);
    if (const auto* v = r.get("methods")) {
      c.methods.clear();
      for (const auto& item : split_list(*v)) c.methods.push_back(parse_similarity_method(item));
    }
    if (const auto* v = r.get("modes")) {
      c.modes.clear();
      for (const auto& item : split_list(*v)) c.modes.push_back(parse_run_mode(item));
    }
    if (const auto* v = r.get("output_dir")) c.output_dir = trim(*v);
    r.read("threads", c.threads);
    r.finish();
  }
  {
    SectionReader r(sections, "policy");
    r.read("beta", c.policy.beta);
    r.read("lambda", c.policy.lambda);
    if (const auto* v = r.get("kernel")) c.policy.kernel = parse_kernel_family(trim(*v));
    r.read("lengthscale", c.policy.lengthscale);
    r.read("output_scale", c.policy.output_scale);
    r.read("refresh_interval", c.policy.model.refresh_interval);
    r.read("check_residual", c.policy.model.check_residual_on_refresh);
    r.finish();
  }
  {
    SectionReader r(sections, "similarity");
    if (const auto* v = r.get("method")) c.similarity.method = parse_similarity_method(trim(*v));
    r.read("warmup_fraction", c.similarity.warmup_fraction);
    r.read("cke_lambda", c.similarity.cke.lambda);
    r.read("cke_lambda_per_point", c.similarity.cke.lambda_per_point);
    r.read("r2_lambda", c.similarity.r2_lambda);
    r.read("r2_floor", c.similarity.r2_floor);
    r.read("max_points_per_task", c.similarity.max_points_per_task);
    r.read("psd_projection", c.similarity.psd_projection);
    if (const auto* v = r.get("file")) c.similarity.file = trim(*v);
    r.finish();
  }
  {
    SectionReader r(sections, "synthetic");
    r.read("tasks", c.synthetic_tasks);
    r.finish();
  }
  {
    SectionReader r(sections, "gp");
    r.read("tasks", c.sweep.gp.tasks);
    r.read("points_per_task", c.sweep.gp.points_per_task);
    r.read("sim_g", c.sweep.gp.sim_g);
    r.read("lengthscale", c.sweep.gp.lengthscale);
    r.read("noise_variance", c.sweep.gp.noise_variance);
    r.read("train_size", c.sweep.gp.train_size);
    r.read("shared_design", c.sweep.gp.shared_design);
    if (const auto* v = r.get("seed")) c.sweep.gp.seed = r.to_size("seed", *v);
    r.read("draws", c.sweep.draws);
    r.read("grid_step", c.sweep.grid_step);
    r.read("lambda", c.sweep.lambda);
    r.finish();
  }
  {
    SectionReader r(sections, "trace");
    if (const auto* v = r.get("path")) c.trace.path = trim(*v);
    r.read("k", c.trace.k);
    if (const auto* v = r.get("stations")) c.trace.stations = split_list(*v);
    r.read("max_stations", c.trace.max_stations);
    if (const auto* v = r.get("state_source")) c.trace.source = parse_state_source(trim(*v));
    r.read("bs_id_column", c.trace.schema.bs_id);
    if (const auto* v = r.get("state_columns")) {
      const auto cols = split_list(*v);
      if (cols.size() != kStateDim) {
        throw ConfigError(fmt::format("trace.state_columns needs {} names, got {}", kStateDim, cols.size()));
      }
      std::copy(cols.begin(), cols.end(), c.trace.schema.state.begin());
    }
    r.read("action_column", c.trace.schema.action);
    r.read("reward_column", c.trace.schema.reward);
    r.read("reward_scale", c.trace.schema.reward_scale);
    r.read("action_min", c.trace.schema.action_min);
    r.read("action_max", c.trace.schema.action_max);
    r.finish();
  }
  {
    SectionReader r(sections, "theory");
    r.read("tasks", c.theory.tasks);
    r.read("horizon", c.theory.horizon);
    r.read("rank_instances", c.theory.rank_instances);
    r.read("monotonicity_sets", c.theory.monotonicity_sets);
    r.read("lambda", c.theory.lambda);
    if (const auto* v = r.get("mu_grid")) {
      c.theory.mu_grid.clear();
      for (const auto& item : split_list(*v)) c.theory.mu_grid.push_back(r.to_double("mu_grid", item));
    }
    r.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error at line {}: {}", e.line(), e.message()));
  }
  return from_sections(sections_from_ptree(tree));
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  ExperimentConfig c;
  if (path.extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    c = from_sections(sections_from_json(doc));
  } else {
    try {
      c = parse_config_ini(text);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
  }
  const auto base = path.parent_path();
  resolve_relative(c.trace.path, base);
  resolve_relative(c.similarity.file, base);
  return c;
}

std::string sections_to_ini(const ConfigSections& sections) {
  std::string out;
  for (const auto& [name, body] : sections) {
    out += fmt::format("[{}]\n", name);
    for (const auto& [key, value] : body) out += fmt::format("{} = {}\n", key, value);
    out += '\n';
  }
  return out;
}

}  // namespace mtcb
