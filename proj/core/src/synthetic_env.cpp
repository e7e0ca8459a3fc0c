#include <cmath>
#include <numbers>

#include "mtcb/envs.hpp"
#include "mtcb/error.hpp"
#include "mtcb/rng.hpp"

namespace mtcb {

SyntheticBanditEnv::SyntheticBanditEnv(std::size_t tasks) : tasks_(tasks) {
  if (tasks_ == 0) throw ConfigError("SyntheticBanditEnv: need at least one task");
}

double SyntheticBanditEnv::reward(double u0, std::size_t arm, std::size_t task) {
  const double a = static_cast<double>(arm + 1);
  const double m = static_cast<double>(task + 1);
  const double d = u0 - a / 5.0 + 0.3 - m / 10.0;
  return 1.0 - d * d;
}

ContextVector SyntheticBanditEnv::context(const Eigen::Vector2d& u, std::size_t arm,
                                          std::size_t task) {
  const double a = static_cast<double>(arm + 1);
  const double m = static_cast<double>(task + 1);
  constexpr double half_pi = std::numbers::pi / 2.0;
  ContextVector x(2);
  x << u(0) * std::cos(half_pi * (a / 5.0 + m / 10.0)), u(1) * std::sin(half_pi * (a / 5.0));
  return x;
}

Eigen::Vector2d SyntheticBanditEnv::hidden(std::uint64_t seed, std::size_t slot) const {
  auto rng = make_rng(seed, streams::synthetic_hidden, slot);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u0 = unit(rng);
  const double u1 = unit(rng);
  return {u0, u1};
}

RoundData SyntheticBanditEnv::round_for(const Eigen::Vector2d& u, std::size_t task) const {
  if (task >= tasks_) throw Error("SyntheticBanditEnv: task out of range");
  RoundData round;
  round.contexts.reserve(kArms);
  for (std::size_t a = 0; a < kArms; ++a) {
    round.contexts.push_back(context(u, a, task));
    round.expected.push_back(reward(u(0), a, task));
  }
  round.rewards = round.expected;
  return round;
}

RoundData SyntheticBanditEnv::observe(std::uint64_t seed, std::size_t slot,
                                      std::size_t task) const {
  return round_for(hidden(seed, slot), task);
}

}  // namespace mtcb
