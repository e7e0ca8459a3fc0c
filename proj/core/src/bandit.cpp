#include "mtcb/bandit.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "mtcb/csv.hpp"
#include "mtcb/error.hpp"

namespace mtcb {

namespace {

void check_env(const Environment& env, const PolicyConfig& config) {
  config.validate();
  if (env.task_count() == 0 || env.arm_count() == 0) {
    throw ConfigError("environment has no tasks or no arms");
  }
  if (config.similarity.size() != env.task_count()) {
    throw DimensionError("policy similarity matrix vs environment tasks", env.task_count(),
                         config.similarity.size());
  }
}

template <class E>
[[noreturn]] void rethrow_as(const E& e, std::size_t time, std::size_t task) {
  throw E(fmt::format("round {}, task {}: {}", time, task, e.what()));
}

RoundData observe_annotated(const Environment& env, std::uint64_t seed, std::size_t slot,
                            std::size_t task, std::size_t time) {
  try {
    RoundData round = env.observe(seed, slot, task);
    if (round.contexts.empty() || round.contexts.size() != round.expected.size() ||
        round.contexts.size() != round.rewards.size()) {
      throw DataError("environment returned an inconsistent round");
    }
    return round;
  } catch (const ConfigError& e) {
    rethrow_as(e, time, task);
  } catch (const DataError& e) {
    rethrow_as(e, time, task);
  } catch (const Error& e) {
    rethrow_as(e, time, task);
  }
}

RoundLog make_log(std::size_t time, std::size_t task, const RoundData& round, ArmChoice choice) {
  RoundLog log;
  log.time = time;
  log.task = task;
  log.arm = choice.arm;
  log.reward = round.rewards[choice.arm];
  log.expected_reward = round.expected[choice.arm];
  log.best_expected = round.best_expected();
  log.ucb = std::move(choice.ucb);
  log.width = std::move(choice.width);
  return log;
}

}  // namespace

void PolicyConfig::validate() const {
  if (!(std::isfinite(beta) && beta >= 0.0)) {
    throw ConfigError(fmt::format("beta must be nonnegative, got {}", beta));
  }
  if (!(std::isfinite(lambda) && lambda > 0.0)) {
    throw ConfigError(fmt::format("lambda must be positive, got {}", lambda));
  }
  kx.validate();
}

std::size_t argmax_first(std::span<const double> values) {
  if (values.empty()) throw Error("argmax over an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ArmChoice select_arm(const MultiTaskModel& model, double beta, std::size_t task,
                     std::span<const ContextVector> contexts) {
  if (contexts.empty()) throw Error("select_arm: no arms");
  return choose(model.predict(task, contexts), beta);
}

ArmChoice choose(std::span<const Prediction> preds, double beta) {
  if (preds.empty()) throw Error("no arms to choose from");
  ArmChoice choice;
  choice.ucb.reserve(preds.size());
  choice.width.reserve(preds.size());
  choice.mean.reserve(preds.size());
  for (const auto& p : preds) {
    choice.mean.push_back(p.mean);
    choice.width.push_back(p.width);
    choice.ucb.push_back(p.mean + beta * p.width);
  }
  choice.arm = argmax_first(choice.ucb);
  return choice;
}

std::vector<RoundLog> run_parallel(const Environment& env, const PolicyConfig& config,
                                   std::size_t horizon, std::uint64_t seed) {
  check_env(env, config);
  if (horizon == 0) throw ConfigError("horizon must be at least 1");
  const std::size_t tasks = env.task_count();
  MultiTaskModel model(config.kx, config.similarity, config.lambda, config.model);
  model.reserve(tasks * horizon);

  std::vector<RoundLog> logs;
  logs.reserve(tasks * horizon);
  std::vector<AugmentedContext> batch_x(tasks);
  std::vector<double> batch_r(tasks);
  std::vector<RoundData> rounds(tasks);
  std::vector<AugmentedContext> queries;
  std::vector<std::size_t> chosen_columns(tasks);
  QueryWork work;
  for (std::size_t t = 0; t < horizon; ++t) {
    // Every task chooses with the model as it stood at the start of the
    // round; the predictions of all tasks share one pass over the model.
    queries.clear();
    for (std::size_t m = 0; m < tasks; ++m) {
      rounds[m] = observe_annotated(env, seed, t, m, t);
      for (const auto& x : rounds[m].contexts) queries.push_back({m, x});
    }
    const auto preds = model.predict(queries, &work);
    std::size_t offset = 0;
    for (std::size_t m = 0; m < tasks; ++m) {
      const RoundData& round = rounds[m];
      const std::size_t arms = round.contexts.size();
      ArmChoice choice = choose(std::span(preds).subspan(offset, arms), config.beta);
      chosen_columns[m] = offset + choice.arm;
      offset += arms;
      batch_x[m] = {m, round.contexts[choice.arm]};
      batch_r[m] = round.rewards[choice.arm];
      logs.push_back(make_log(t, m, round, std::move(choice)));
    }
    model.append(batch_x, batch_r, work, chosen_columns);
  }
  return logs;
}

namespace {

std::vector<std::size_t> resolve_schedule(std::size_t tasks, std::size_t steps,
                                          std::span<const std::size_t> schedule) {
  std::vector<std::size_t> out;
  if (schedule.empty()) {
    out.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) out[t] = t % tasks;
    return out;
  }
  if (schedule.size() < steps) {
    throw ConfigError(fmt::format("schedule covers {} steps, need {}", schedule.size(), steps));
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (schedule[t] >= tasks) {
      throw ConfigError(fmt::format("schedule step {} names task {} of {}", t, schedule[t], tasks));
    }
  }
  return {schedule.begin(), schedule.begin() + static_cast<std::ptrdiff_t>(steps)};
}

}  // namespace

std::vector<RoundLog> run_sequential(const Environment& env, const PolicyConfig& config,
                                     std::size_t steps, std::uint64_t seed,
                                     std::span<const std::size_t> schedule) {
  check_env(env, config);
  if (steps == 0) throw ConfigError("horizon must be at least 1");
  const auto order = resolve_schedule(env.task_count(), steps, schedule);
  MultiTaskModel model(config.kx, config.similarity, config.lambda, config.model);
  model.reserve(steps);

  std::vector<std::size_t> visits(env.task_count(), 0);
  std::vector<RoundLog> logs;
  logs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t m = order[t];
    const RoundData round = observe_annotated(env, seed, visits[m]++, m, t);
    ArmChoice choice = select_arm(model, config.beta, m, round.contexts);
    model.append({m, round.contexts[choice.arm]}, round.rewards[choice.arm]);
    logs.push_back(make_log(t, m, round, std::move(choice)));
  }
  return logs;
}

std::vector<double> cumulative_regret(std::span<const RoundLog> logs,
                                      std::span<const double> oracle) {
  if (logs.size() != oracle.size()) {
    throw DimensionError("cumulative_regret: oracle", logs.size(), oracle.size());
  }
  std::vector<double> out(logs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    sum += oracle[i] - logs[i].expected_reward;
    out[i] = sum;
  }
  return out;
}

std::vector<double> cumulative_regret(std::span<const RoundLog> logs) {
  std::vector<double> oracle(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) oracle[i] = logs[i].best_expected;
  return cumulative_regret(logs, oracle);
}

std::vector<double> regret_by_round(std::span<const RoundLog> logs) {
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    sum += logs[i].regret();
    if (i + 1 == logs.size() || logs[i + 1].time != logs[i].time) out.push_back(sum);
  }
  return out;
}

void write_round_logs_csv(std::ostream& out, std::span<const RoundLog> logs) {
  out << "time,task,arm,reward,regret,width_chosen\n";
  for (const auto& log : logs) {
    out << log.time << ',' << log.task << ',' << log.arm << ',' << format_real(log.reward) << ','
        << format_real(log.regret()) << ',' << format_real(log.width.at(log.arm)) << '\n';
  }
}

}  // namespace mtcb
