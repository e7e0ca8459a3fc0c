#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mtcb/bandit.hpp"
#include "mtcb/config.hpp"
#include "mtcb/envs.hpp"
#include "mtcb/similarity_matrix.hpp"
#include "mtcb/theory.hpp"

namespace mtcb {

enum class OutputFormat { csv, json };
OutputFormat parse_output_format(std::string_view name);

// ---------------------------------------------------------------------------
// Similarity sweep on GP-sampled regression tasks
// ---------------------------------------------------------------------------

struct SweepResult {
  std::vector<double> grid;
  /// mse[i][d]: test MSE (averaged over tasks) at grid[i] for draw d.
  std::vector<std::vector<double>> mse;

  double mean(std::size_t i) const;
  /// Standard error of the mean across draws.
  double stderr_of(std::size_t i) const;
  /// Standard error of the per-draw difference mse[i] - mse[j].
  double paired_stderr(std::size_t i, std::size_t j) const;
  std::size_t argmin() const;
  /// Grid index closest to `value`.
  std::size_t index_of(double value) const;
};

/// Multi-task test MSE (mean over tasks) for one draw and one training
/// similarity.
double multitask_test_mse(const std::vector<GpTaskSplit>& split, const KernelSpec& kx,
                          double sim_train, double lambda);

SweepResult run_sim_sweep(const SweepSettings& settings, std::size_t threads = 0);

// ---------------------------------------------------------------------------
// Bandit experiments
// ---------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  SimilarityMatrix similarity = SimilarityMatrix::identity(1);
  KernelSpec kx;
  std::vector<RoundLog> logs;
  /// Cumulative regret summed over tasks at the end of each round (parallel)
  /// or step (sequential).
  std::vector<double> curve;
};

struct MethodRun {
  SimilarityMethod method = SimilarityMethod::identity;
  RunMode mode = RunMode::parallel;
  std::vector<SeedRun> seeds;  // in config seed order

  std::vector<double> mean_curve() const;
  double final_mean() const;
  double final_stderr() const;
};

struct BanditResult {
  std::size_t tasks = 0;
  std::vector<MethodRun> runs;

  const MethodRun* find(SimilarityMethod method, RunMode mode) const;
};

/// Everything a bandit experiment needs besides the policy: the
/// environment and the per-seed data used to fit kernel and similarity.
class BanditSetup {
 public:
  explicit BanditSetup(const ExperimentConfig& config);

  const Environment& environment() const { return *env_; }
  /// Similarity-estimation data for a seed (warmup samples for the
  /// synthetic environment, logged rows for traces).
  std::vector<TaskDataset> similarity_data(std::uint64_t seed) const;
  KernelSpec context_kernel(const std::vector<TaskDataset>& data) const;
  SimilarityMatrix estimate_similarity(SimilarityMethod method, const std::vector<TaskDataset>& data,
                                       const KernelSpec& kx) const;

 private:
  ExperimentConfig config_;
  std::unique_ptr<Environment> env_;
  std::vector<TaskDataset> logged_;  // traces only
};

/// Identity similarity run as one independent single-task policy per task,
/// logs merged into the joint (time, task) order.
std::vector<RoundLog> run_independent(const Environment& env, const PolicyConfig& config,
                                      RunMode mode, std::size_t horizon, std::uint64_t seed);

BanditResult run_bandit_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Output writers; each returns the files it created, relative to `dir`.
// ---------------------------------------------------------------------------

std::vector<std::filesystem::path> write_sweep_outputs(const SweepResult& result,
                                                       const std::filesystem::path& dir,
                                                       OutputFormat format);
std::vector<std::filesystem::path> write_bandit_outputs(const BanditResult& result,
                                                        const std::filesystem::path& dir,
                                                        OutputFormat format);
std::vector<std::filesystem::path> write_theory_outputs(const TheoryReport& report,
                                                        const std::filesystem::path& dir,
                                                        OutputFormat format);

/// manifest.json: tool version, command, seeds, the effective configuration
/// and the list of outputs. Loading it with load_config reproduces the run.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config,
                    const std::vector<std::filesystem::path>& outputs);

/// Runs the experiment named by `config.kind` and writes every output plus
/// the manifest into `dir`. Nothing is written if the run fails.
std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config,
                                                  const std::filesystem::path& dir,
                                                  OutputFormat format);

}  // namespace mtcb
