#pragma once

#include <cstdint>
#include <random>

namespace mtcb {

/// Counter-based seeding: every (seed, stream, index) triple gets its own
/// generator, so draws do not depend on evaluation order or thread schedule.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Stream identifiers used across the library.
namespace streams {
inline constexpr std::uint64_t synthetic_hidden = 1;
inline constexpr std::uint64_t gp_design = 2;
inline constexpr std::uint64_t gp_draw = 3;
inline constexpr std::uint64_t warmup = 4;
inline constexpr std::uint64_t trace_state = 5;
inline constexpr std::uint64_t random_policy = 6;
inline constexpr std::uint64_t theory_instance = 7;
inline constexpr std::uint64_t theory_contexts = 8;
}  // namespace streams

}  // namespace mtcb
