#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtcb/dataset.hpp"
#include "mtcb/environment.hpp"
#include "mtcb/kernels.hpp"
#include "mtcb/similarity_matrix.hpp"

namespace mtcb {

// ---------------------------------------------------------------------------
// Projected-context synthetic bandit
// ---------------------------------------------------------------------------

/// Five arms per task. A hidden u ~ U([0,1]^2) is drawn once per slot and
/// shared by all tasks. With 1-based arm a and task m,
///
///   x = (u0 cos(pi/2 (a/5 + m/10)), u1 sin(pi/2 a/5))
///   r = 1 - (u0 - a/5 + 0.3 - m/10)^2
///
/// Arm index i and task index j used by the API are 0-based (a = i + 1,
/// m = j + 1). Rewards are deterministic given u and can drop below zero
/// (down to -0.44) for tasks 4-5 at small u0.
class SyntheticBanditEnv final : public Environment {
 public:
  static constexpr std::size_t kArms = 5;

  explicit SyntheticBanditEnv(std::size_t tasks = 5);

  std::size_t task_count() const override { return tasks_; }
  std::size_t arm_count() const override { return kArms; }
  std::size_t context_dim() const override { return 2; }
  RoundData observe(std::uint64_t seed, std::size_t slot, std::size_t task) const override;

  /// The round for an explicit hidden parameter.
  RoundData round_for(const Eigen::Vector2d& u, std::size_t task) const;
  Eigen::Vector2d hidden(std::uint64_t seed, std::size_t slot) const;

  static double reward(double u0, std::size_t arm, std::size_t task);
  static ContextVector context(const Eigen::Vector2d& u, std::size_t arm, std::size_t task);

 private:
  std::size_t tasks_;
};

// ---------------------------------------------------------------------------
// GP-sampled multi-task regression data
// ---------------------------------------------------------------------------

struct GpRegressionConfig {
  std::size_t tasks = 2;
  std::size_t points_per_task = 100;
  double sim_g = 0.8;
  double lengthscale = 0.5;
  double noise_variance = 0.05;
  std::size_t train_size = 5;
  /// All tasks share one input design, which makes the covariance exactly
  /// K_Z (x) K_X + noise I. Otherwise every task gets its own inputs and the
  /// covariance is the product kernel over the stacked design.
  bool shared_design = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GpTaskSplit {
  TaskDataset train;
  TaskDataset test;
};

/// Fixed input design with a precomputed covariance factor; each draw
/// resamples the targets only.
class GpTaskGenerator {
 public:
  explicit GpTaskGenerator(GpRegressionConfig config);

  const GpRegressionConfig& config() const noexcept { return config_; }
  const SimilarityMatrix& ground_truth() const noexcept { return kz_; }
  /// Inputs of every task (task-major stacking order of the targets).
  const std::vector<std::vector<ContextVector>>& designs() const noexcept { return designs_; }

  /// Covariance of the stacked target vector, noise included.
  Eigen::MatrixXd covariance() const;
  Eigen::VectorXd draw_targets(std::size_t draw) const;
  /// Targets of draw `draw`, split per task into the first train_size
  /// points (train) and the rest (test).
  std::vector<GpTaskSplit> draw(std::size_t draw) const;

 private:
  GpRegressionConfig config_;
  SimilarityMatrix kz_;
  std::vector<std::vector<ContextVector>> designs_;
  Eigen::MatrixXd factor_;  // noise-free covariance = factor_ factor_^T
};

std::vector<GpTaskSplit> generate_gp_tasks(const GpRegressionConfig& config);

/// F with F F^T = m for a symmetric PSD m (eigenvalues clipped at zero).
/// Throws mtcb::DataError if the smallest eigenvalue is below
/// -1e-8 * trace(m) / n.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m);

// ---------------------------------------------------------------------------
// Trace ingestion and the k-NN simulator
// ---------------------------------------------------------------------------

inline constexpr std::size_t kStateDim = 5;
using TraceState = std::array<double, kStateDim>;

/// Maps record fields to CSV header names.
struct TraceSchema {
  std::string bs_id = "BS ID";
  std::array<std::string, kStateDim> state = {"# Active users", "% CQI", "%Small packet SDUs",
                                              "%Small packet volume", "# Users"};
  std::string action = "Threshold handover";
  std::string reward = "%Users throughput>=5Mbps";
  /// Raw reward values are divided by this (percent -> fraction).
  double reward_scale = 100.0;
  int action_min = -112;
  int action_max = -84;

  std::size_t arm_count() const { return static_cast<std::size_t>(action_max - action_min + 1); }
};

struct TraceRecord {
  std::string bs_id;
  TraceState state{};
  int action = 0;
  double reward = 0.0;  // in [0, 1]
};

/// Per-column mean and standard deviation of the five state features
/// followed by the action.
struct ColumnStats {
  std::array<double, kStateDim + 1> mean{};
  std::array<double, kStateDim + 1> stddev{};
};

ColumnStats compute_column_stats(std::span<const TraceRecord> records);

struct IngestResult {
  std::vector<TraceRecord> records;
  std::vector<std::string> rejects;  // one message per rejected row
  ColumnStats stats;
};

/// Parses a trace CSV with a header row. Rows with missing or non-numeric
/// fields, out-of-range actions or out-of-range rewards are rejected and
/// reported; an unreadable file, an unknown schema column or zero valid
/// rows throw mtcb::DataError.
IngestResult ingest_traces(const std::filesystem::path& path, const TraceSchema& schema = {});

/// Writes records back in the schema's column layout (rewards rescaled to
/// the raw unit).
void write_traces_csv(std::ostream& out, std::span<const TraceRecord> records,
                      const TraceSchema& schema = {});

/// Deterministic reward model over a trace table: the mean reward of the k
/// records nearest to the z-scored (state, action) query. Ties at equal
/// distance go to the earlier record.
class KnnSimulator {
 public:
  KnnSimulator(std::vector<TraceRecord> records, std::size_t k);

  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  const ColumnStats& stats() const noexcept { return stats_; }

  /// z-scored 6-vector (state, action); also the bandit context.
  ContextVector normalize(const TraceState& state, int action) const;
  double reward(const TraceState& state, int action) const;

 private:
  std::vector<TraceRecord> records_;
  std::size_t k_;
  ColumnStats stats_;
  Eigen::MatrixXd features_;  // 6 x records, normalized
};

enum class StateSource { replay, sample };

StateSource parse_state_source(std::string_view name);

/// Trace-driven bandit: one task per base station, one arm per handover
/// threshold. States come from the station's own rows, either replayed in
/// file order from a seed-dependent offset or sampled uniformly.
class TraceBanditEnv final : public Environment {
 public:
  TraceBanditEnv(std::shared_ptr<const KnnSimulator> simulator, std::vector<std::string> bs_ids,
                 TraceSchema schema = {}, StateSource source = StateSource::replay);

  std::size_t task_count() const override { return bs_ids_.size(); }
  std::size_t arm_count() const override { return schema_.arm_count(); }
  std::size_t context_dim() const override { return kStateDim + 1; }
  RoundData observe(std::uint64_t seed, std::size_t slot, std::size_t task) const override;

  const TraceState& state_for(std::uint64_t seed, std::size_t slot, std::size_t task) const;
  const std::vector<std::string>& bs_ids() const noexcept { return bs_ids_; }
  int action_for_arm(std::size_t arm) const { return schema_.action_min + static_cast<int>(arm); }

  /// Logged (context, reward) pairs of every station, for similarity
  /// estimation.
  std::vector<TaskDataset> logged_datasets() const;

 private:
  std::shared_ptr<const KnnSimulator> simulator_;
  std::vector<std::string> bs_ids_;
  TraceSchema schema_;
  StateSource source_;
  std::vector<std::vector<std::size_t>> rows_;  // record indices per station
};

/// Station ids in order of first appearance.
std::vector<std::string> station_ids(std::span<const TraceRecord> records);

}  // namespace mtcb
