#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtcb/envs.hpp"
#include "mtcb/kernels.hpp"
#include "mtcb/krr.hpp"
#include "mtcb/similarity.hpp"
#include "mtcb/theory.hpp"

namespace mtcb {

enum class ExperimentKind { sim_sweep, synthetic_bandit, trace_bandit, theory_checks, similarity };
enum class SimilarityMethod { identity, cke, r2, file };
enum class RunMode { parallel, sequential };

std::string_view to_string(ExperimentKind kind);
std::string_view to_string(SimilarityMethod method);
std::string_view to_string(RunMode mode);
std::string_view to_string(StateSource source);
ExperimentKind parse_experiment_kind(std::string_view name);
SimilarityMethod parse_similarity_method(std::string_view name);
RunMode parse_run_mode(std::string_view name);

struct PolicySettings {
  double beta = 1.0;
  double lambda = 1.0;
  KernelFamily kernel = KernelFamily::gaussian;
  /// Unset: median heuristic over the warmup (or logged) contexts.
  std::optional<double> lengthscale;
  double output_scale = 1.0;
  ModelOptions model;
};

struct SimilaritySettings {
  /// Warmup samples per task, as a fraction of the horizon.
  double warmup_fraction = 0.1;
  CkeOptions cke;
  double r2_lambda = 1.0;
  double r2_floor = -0.5;
  /// Leading points of each task's data used for estimation (0 = all).
  std::size_t max_points_per_task = 0;
  /// Project an indefinite estimate onto the PSD cone before use.
  bool psd_projection = true;
  std::filesystem::path file;
  /// Method used by the standalone similarity command.
  SimilarityMethod method = SimilarityMethod::cke;
};

struct SweepSettings {
  GpRegressionConfig gp;
  std::size_t draws = 100;
  double grid_step = 0.01;
  /// Ridge of the regressor; unset means the generator's noise variance.
  std::optional<double> lambda;
};

struct TraceSettings {
  std::filesystem::path path;
  std::size_t k = 5;
  /// Explicit station ids; empty means the first max_stations in file order.
  std::vector<std::string> stations;
  std::size_t max_stations = 10;
  StateSource source = StateSource::replay;
  TraceSchema schema;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::synthetic_bandit;
  std::size_t horizon = 1000;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<SimilarityMethod> methods = {SimilarityMethod::identity, SimilarityMethod::cke};
  std::vector<RunMode> modes = {RunMode::parallel};
  std::filesystem::path output_dir = "runs";
  /// Worker threads for seed fan-out; 0 = hardware concurrency.
  std::size_t threads = 0;

  PolicySettings policy;
  SimilaritySettings similarity;
  std::size_t synthetic_tasks = 5;
  SweepSettings sweep;
  TraceSettings trace;
  TheoryOptions theory;

  /// Throws mtcb::ConfigError on any inconsistent setting.
  void validate() const;
};

/// section -> key -> value; the flat tree behind both file formats.
using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

ConfigSections to_sections(const ExperimentConfig& config);
/// Unknown sections or keys are errors, missing keys keep their defaults.
ExperimentConfig from_sections(const ConfigSections& sections);

/// Reads an INI file, or a JSON file whose "config" member (or the whole
/// document) holds the sections. Relative paths inside the file resolve
/// against the file's directory. Throws mtcb::ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_ini(const std::string& text);

std::string sections_to_ini(const ConfigSections& sections);

}  // namespace mtcb
