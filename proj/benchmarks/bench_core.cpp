#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mtcb/krr.hpp"
#include "mtcb/similarity.hpp"

namespace {

mtcb::AugmentedContext random_point(std::mt19937_64& rng, std::size_t tasks) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  mtcb::ContextVector x(4);
  for (int d = 0; d < 4; ++d) x[d] = unit(rng);
  return {static_cast<std::size_t>(rng() % tasks), x};
}

mtcb::MultiTaskModel filled_model(std::size_t n, std::mt19937_64& rng) {
  mtcb::MultiTaskModel model(mtcb::KernelSpec::gaussian(0.5), mtcb::SimilarityMatrix::uniform(5, 0.5),
                             1.0, {.refresh_interval = 0});
  model.reserve(n + 64);
  for (std::size_t i = 0; i < n; ++i) model.append(random_point(rng, 5), 0.5);
  return model;
}

void BM_PredictRound(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto model = filled_model(static_cast<std::size_t>(state.range(0)), rng);
  std::vector<mtcb::AugmentedContext> queries;
  for (int i = 0; i < 25; ++i) queries.push_back(random_point(rng, 5));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(queries));
}
BENCHMARK(BM_PredictRound)->Arg(500)->Arg(2000)->Arg(5000);

void BM_AppendRound(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto base = filled_model(static_cast<std::size_t>(state.range(0)), rng);
  std::vector<mtcb::AugmentedContext> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_point(rng, 5));
  const std::vector<double> ys(5, 0.5);
  for (auto _ : state) {
    state.PauseTiming();
    auto model = base;
    state.ResumeTiming();
    model.append(xs, ys);
    benchmark::DoNotOptimize(model.size());
  }
}
BENCHMARK(BM_AppendRound)->Arg(500)->Arg(2000);

void BM_CkeSimilarity(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<mtcb::TaskDataset> data(5);
  for (auto& d : data) {
    for (int i = 0; i < state.range(0); ++i) {
      mtcb::ContextVector x(4);
      for (int k = 0; k < 4; ++k) x[k] = unit(rng);
      d.add(x, unit(rng));
    }
  }
  const auto kx = mtcb::default_context_kernel(data);
  const auto ky = mtcb::default_target_kernel(data);
  for (auto _ : state) benchmark::DoNotOptimize(mtcb::cke_similarity(data, kx, ky));
}
BENCHMARK(BM_CkeSimilarity)->Arg(50)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
