#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mtcb/environment.hpp"
#include "mtcb/kernels.hpp"
#include "mtcb/krr.hpp"
#include "mtcb/similarity_matrix.hpp"

namespace mtcb {

struct PolicyConfig {
  /// Exploration weight of the UCB width.
  double beta = 1.0;
  double lambda = 1.0;
  KernelSpec kx = KernelSpec::gaussian(0.5);
  SimilarityMatrix similarity = SimilarityMatrix::identity(1);
  ModelOptions model;

  /// Throws mtcb::ConfigError on a negative beta, non-positive lambda or a
  /// bad kernel.
  void validate() const;
};

struct ArmChoice {
  std::size_t arm = 0;
  std::vector<double> ucb;
  std::vector<double> width;
  std::vector<double> mean;
};

/// ucb = mean + beta * width for every arm; the lowest index attaining the
/// maximum wins.
ArmChoice select_arm(const MultiTaskModel& model, double beta, std::size_t task,
                     std::span<const ContextVector> contexts);

/// UCB choice from precomputed predictions.
ArmChoice choose(std::span<const Prediction> predictions, double beta);

/// Index of the first maximum.
std::size_t argmax_first(std::span<const double> values);

struct RoundLog {
  std::size_t time = 0;  // round index (parallel) or step index (sequential)
  std::size_t task = 0;
  std::size_t arm = 0;
  double reward = 0.0;           // realized
  double expected_reward = 0.0;  // E[r | chosen arm]
  double best_expected = 0.0;    // E[r | best arm]
  std::vector<double> ucb;
  std::vector<double> width;
  /// Stage that made the choice in run_super; -1 elsewhere.
  int stage = -1;

  double regret() const { return best_expected - expected_reward; }
};

/// Parallel multi-task UCB: in every round all tasks choose with the model
/// as it stood at the start of the round, then the M observations are
/// appended together. Logs are ordered by (round, task).
std::vector<RoundLog> run_parallel(const Environment& env, const PolicyConfig& config,
                                   std::size_t horizon, std::uint64_t seed);

/// Sequential multi-task UCB: step t serves one task and appends its
/// observation immediately. Without a schedule the tasks come round-robin.
/// A task's k-th visit observes slot k, so a round-robin run of M*T steps
/// sees the same environment draws as run_parallel over T rounds.
std::vector<RoundLog> run_sequential(const Environment& env, const PolicyConfig& config,
                                     std::size_t steps, std::uint64_t seed,
                                     std::span<const std::size_t> schedule = {});

struct SuperRunResult {
  std::vector<RoundLog> logs;
  /// psi[s - 1] lists the steps whose observation went into stage s.
  std::vector<std::vector<std::size_t>> psi;
};

/// Staged-elimination variant used for analysis. Stage s keeps its own
/// model over the steps in psi[s - 1]; S = ceil(ln T) stages.
SuperRunResult run_super(const Environment& env, const PolicyConfig& config, std::size_t steps,
                         std::uint64_t seed, std::span<const std::size_t> schedule = {});

std::size_t super_stage_count(std::size_t steps);

/// Prefix sums of oracle[i] - logs[i].expected_reward.
std::vector<double> cumulative_regret(std::span<const RoundLog> logs,
                                      std::span<const double> oracle);
/// Same with the oracle stored in the logs.
std::vector<double> cumulative_regret(std::span<const RoundLog> logs);

/// Cumulative regret summed over tasks at the end of each distinct `time`.
std::vector<double> regret_by_round(std::span<const RoundLog> logs);

/// Columns: time, task, arm, reward, regret, width_chosen.
void write_round_logs_csv(std::ostream& out, std::span<const RoundLog> logs);

}  // namespace mtcb
