#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtcb/dataset.hpp"
#include "mtcb/kernels.hpp"

namespace mtcb {

/// Everything a policy sees (contexts) and everything the evaluator needs
/// (realized and expected rewards) for one task in one slot.
struct RoundData {
  std::vector<ContextVector> contexts;
  std::vector<double> rewards;   // realized reward of each arm
  std::vector<double> expected;  // E[r | arm]; used for pseudo-regret

  /// Lowest index attaining the largest expected reward.
  std::size_t best_arm() const;
  double best_expected() const { return expected[best_arm()]; }
};

/// A multi-task contextual bandit environment.
///
/// observe() must be a pure function of (seed, slot, task): implementations
/// derive all randomness from counter-based generators, which makes
/// parallel and sequential runs see identical draws and lets task subsets be
/// replayed independently.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t task_count() const = 0;
  virtual std::size_t arm_count() const = 0;
  virtual std::size_t context_dim() const = 0;

  virtual RoundData observe(std::uint64_t seed, std::size_t slot, std::size_t task) const = 0;
};

/// View of selected tasks of another environment, renumbered 0..k-1.
class TaskSubsetEnvironment final : public Environment {
 public:
  TaskSubsetEnvironment(const Environment& base, std::vector<std::size_t> tasks);

  std::size_t task_count() const override { return tasks_.size(); }
  std::size_t arm_count() const override { return base_->arm_count(); }
  std::size_t context_dim() const override { return base_->context_dim(); }
  RoundData observe(std::uint64_t seed, std::size_t slot, std::size_t task) const override;

 private:
  const Environment* base_;
  std::vector<std::size_t> tasks_;
};

/// Offline exploration data for similarity estimation: for each task,
/// `samples` uniformly random arms on slots drawn from a warmup stream that
/// is disjoint from the evaluation slots of `seed`.
std::vector<TaskDataset> collect_warmup_datasets(const Environment& env, std::uint64_t seed,
                                                 std::size_t samples);

}  // namespace mtcb
