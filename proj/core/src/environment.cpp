#include "mtcb/environment.hpp"

#include <fmt/format.h>

#include "mtcb/error.hpp"
#include "mtcb/rng.hpp"

namespace mtcb {

std::size_t RoundData::best_arm() const {
  if (expected.empty()) throw Error("RoundData: no arms");
  std::size_t best = 0;
  for (std::size_t a = 1; a < expected.size(); ++a) {
    if (expected[a] > expected[best]) best = a;
  }
  return best;
}

TaskSubsetEnvironment::TaskSubsetEnvironment(const Environment& base,
                                             std::vector<std::size_t> tasks)
    : base_(&base), tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw ConfigError("TaskSubsetEnvironment: no tasks selected");
  for (const auto t : tasks_) {
    if (t >= base.task_count()) {
      throw ConfigError(fmt::format("TaskSubsetEnvironment: task {} out of range ({} tasks)", t,
                                    base.task_count()));
    }
  }
}

RoundData TaskSubsetEnvironment::observe(std::uint64_t seed, std::size_t slot,
                                         std::size_t task) const {
  return base_->observe(seed, slot, tasks_.at(task));
}

std::vector<TaskDataset> collect_warmup_datasets(const Environment& env, std::uint64_t seed,
                                                 std::size_t samples) {
  const std::uint64_t warm_seed = mix_seed(seed, streams::warmup, 0);
  std::vector<TaskDataset> out(env.task_count());
  for (std::size_t task = 0; task < env.task_count(); ++task) {
    auto rng = make_rng(seed, streams::warmup, task + 1);
    std::uniform_int_distribution<std::size_t> pick(0, env.arm_count() - 1);
    for (std::size_t i = 0; i < samples; ++i) {
      const RoundData round = env.observe(warm_seed, i, task);
      const std::size_t arm = pick(rng);
      out[task].add(round.contexts[arm], round.rewards[arm]);
    }
  }
  return out;
}

}  // namespace mtcb
