#include <cmath>

#include <fmt/format.h>

#include "mtcb/bandit.hpp"
#include "mtcb/error.hpp"

namespace mtcb {

std::size_t super_stage_count(std::size_t steps) {
  const auto s = static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(steps))));
  return std::max<std::size_t>(s, 1);
}

SuperRunResult run_super(const Environment& env, const PolicyConfig& config, std::size_t steps,
                         std::uint64_t seed, std::span<const std::size_t> schedule) {
  config.validate();
  if (steps < 2) throw ConfigError("run_super needs at least 2 steps");
  if (config.similarity.size() != env.task_count()) {
    throw DimensionError("policy similarity matrix vs environment tasks", env.task_count(),
                         config.similarity.size());
  }
  const std::size_t tasks = env.task_count();
  std::vector<std::size_t> order(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    order[t] = schedule.empty() ? t % tasks : schedule[t];
    if (order[t] >= tasks) throw ConfigError(fmt::format("schedule step {} out of range", t));
  }

  const std::size_t stages = super_stage_count(steps);
  const double final_width = 1.0 / std::sqrt(static_cast<double>(steps));
  std::vector<MultiTaskModel> models;
  models.reserve(stages);
  for (std::size_t s = 0; s < stages; ++s) {
    models.emplace_back(config.kx, config.similarity, config.lambda, config.model);
  }

  SuperRunResult result;
  result.psi.resize(stages);
  result.logs.reserve(steps);
  std::vector<std::size_t> visits(tasks, 0);

  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t m = order[t];
    const RoundData round = env.observe(seed, visits[m]++, m);
    const std::size_t arms = round.contexts.size();

    std::vector<std::size_t> active(arms);
    for (std::size_t a = 0; a < arms; ++a) active[a] = a;
    std::vector<double> ucb_all(arms, 0.0);
    std::vector<double> width_all(arms, 0.0);

    std::size_t chosen = arms;
    std::size_t chosen_stage = 0;
    bool grows = false;
    for (std::size_t s = 1;; ++s) {
      if (s > stages) {
        throw Error(fmt::format("run_super: step {} did not settle within {} stages", t, stages));
      }
      std::vector<ContextVector> ctx;
      ctx.reserve(active.size());
      for (const auto a : active) ctx.push_back(round.contexts[a]);
      const ArmChoice base = select_arm(models[s - 1], config.beta, m, ctx);
      for (std::size_t i = 0; i < active.size(); ++i) {
        ucb_all[active[i]] = base.ucb[i];
        width_all[active[i]] = base.width[i];
      }
      const double threshold = std::ldexp(1.0, -static_cast<int>(s));
      bool all_final = true;
      bool all_stage = true;
      for (const double w : base.width) {
        const double omega = config.beta * w;
        all_final = all_final && omega <= final_width;
        all_stage = all_stage && omega <= threshold;
      }
      if (all_final) {
        chosen = active[base.arm];
        chosen_stage = s;
        break;
      }
      if (all_stage) {
        const double best = base.ucb[base.arm];
        std::vector<std::size_t> kept;
        for (std::size_t i = 0; i < active.size(); ++i) {
          if (base.ucb[i] >= best - 2.0 * threshold) kept.push_back(active[i]);
        }
        active = std::move(kept);
        continue;
      }
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (config.beta * base.width[i] > threshold) {
          chosen = active[i];
          break;
        }
      }
      chosen_stage = s;
      grows = true;
      break;
    }

    RoundLog log;
    log.time = t;
    log.task = m;
    log.arm = chosen;
    log.reward = round.rewards[chosen];
    log.expected_reward = round.expected[chosen];
    log.best_expected = round.best_expected();
    log.ucb = std::move(ucb_all);
    log.width = std::move(width_all);
    log.stage = static_cast<int>(chosen_stage);
    result.logs.push_back(std::move(log));

    if (grows) {
      models[chosen_stage - 1].append({m, round.contexts[chosen]}, round.rewards[chosen]);
      result.psi[chosen_stage - 1].push_back(t);
    }
  }
  return result;
}

}  // namespace mtcb
