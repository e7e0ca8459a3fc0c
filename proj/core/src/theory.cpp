#include "mtcb/theory.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "mtcb/error.hpp"
#include "mtcb/rng.hpp"

namespace mtcb {

double compute_log_g(std::span<const AugmentedContext> history, const SimilarityMatrix& similarity,
                     const KernelSpec& kx, double lambda) {
  if (history.empty()) throw DataError("compute_log_g: empty history");
  if (!(lambda > 0.0)) throw ConfigError(fmt::format("lambda must be positive, got {}", lambda));
  Eigen::MatrixXd k = augmented_gram(kx, similarity, history);
  // log det(K~/lambda + I) equals the difference of the two logs and is
  // exactly 0 for a zero kernel
  k /= lambda;
  k.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw Error("compute_log_g: K~ + lambda I is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

std::size_t numerical_rank(const Eigen::MatrixXd& symmetric, double rel_tol) {
  if (symmetric.size() == 0) return 0;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = solver.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0;
  return static_cast<std::size_t>((ev.array() > rel_tol * scale).count());
}

RankBoundCheck check_rank_bound(std::span<const AugmentedContext> history,
                                const SimilarityMatrix& similarity, const KernelSpec& kx,
                                double lambda) {
  RankBoundCheck check;
  check.log_g = compute_log_g(history, similarity, kx, lambda);
  std::vector<ContextVector> xs;
  xs.reserve(history.size());
  for (const auto& h : history) xs.push_back(h.context);
  check.rank_x = numerical_rank(gram(kx, xs));
  check.rank_z = numerical_rank(similarity.matrix());
  check.kernel_bound = augmented_gram(kx, similarity, history).diagonal().maxCoeff();
  const double n = static_cast<double>(history.size());
  check.bound = static_cast<double>(check.rank_z * check.rank_x) *
                std::log((n * check.kernel_bound + lambda) / lambda);
  return check;
}

MonotonicityCheck check_monotonicity(std::span<const double> mu_grid,
                                     std::span<const AugmentedContext> history,
                                     std::size_t tasks, const KernelSpec& kx, double lambda,
                                     double rel_tol) {
  MonotonicityCheck out;
  for (std::size_t i = 0; i < mu_grid.size(); ++i) {
    const double mu = mu_grid[i];
    if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError(fmt::format("mu {} outside [0, 1]", mu));
    if (i > 0 && mu < mu_grid[i - 1]) throw ConfigError("mu grid must be ascending");
    out.mu.push_back(mu);
    out.log_g.push_back(compute_log_g(history, SimilarityMatrix::uniform(tasks, mu), kx, lambda));
  }
  // g1 > g0 (1 + tol)  <=>  log g1 - log g0 > log1p(tol)
  for (std::size_t i = 0; i + 1 < out.log_g.size(); ++i) {
    if (out.log_g[i + 1] - out.log_g[i] > std::log1p(rel_tol)) out.violations.push_back(i);
  }
  return out;
}

TheoryInstance random_theory_instance(std::uint64_t seed, std::size_t index, std::size_t tasks,
                                      std::size_t horizon) {
  if (tasks == 0) throw ConfigError("theory instance needs at least one task");
  auto rng = make_rng(seed, streams::theory_instance, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto m = static_cast<Eigen::Index>(tasks);

  Eigen::MatrixXd kz;
  switch (index % 3) {
    case 0:
      kz = Eigen::MatrixXd::Ones(m, m);
      break;
    case 1:
      // first half of the tasks fully shared, the rest independent
      kz = Eigen::MatrixXd::Identity(m, m);
      kz.topLeftCorner((m + 1) / 2, (m + 1) / 2).setOnes();
      break;
    default: {
      std::vector<ContextVector> desc;
      for (Eigen::Index i = 0; i < m; ++i) desc.push_back(ContextVector::Constant(1, unit(rng)));
      kz = gram(KernelSpec::gaussian(0.5), desc);
      break;
    }
  }

  TheoryInstance inst;
  inst.similarity = SimilarityMatrix(kz);
  Eigen::Index dim = 2;
  switch (index % 4) {
    case 0: dim = 1; inst.kx = KernelSpec::linear(); break;
    case 1: dim = 2; inst.kx = KernelSpec::linear(); break;
    case 2: dim = 3; inst.kx = KernelSpec::linear(); break;
    default: dim = 2; inst.kx = KernelSpec::gaussian(0.5); break;
  }
  for (std::size_t t = 0; t <= horizon; ++t) {
    ContextVector x(dim);
    for (Eigen::Index d = 0; d < dim; ++d) x(d) = unit(rng);
    inst.history.push_back({t % tasks, std::move(x)});
  }
  return inst;
}

std::size_t TheoryReport::rank_violations() const {
  std::size_t n = 0;
  for (const auto& c : rank_checks) n += c.holds() ? 0 : 1;
  return n;
}

std::size_t TheoryReport::monotonicity_violations() const {
  std::size_t n = 0;
  for (const auto& c : monotonicity) n += c.violations.size();
  return n;
}

TheoryReport run_theory_checks(const TheoryOptions& options, std::uint64_t seed) {
  TheoryReport report;
  report.lambda = options.lambda;
  for (std::size_t i = 0; i < options.rank_instances; ++i) {
    const auto inst = random_theory_instance(seed, i, options.tasks, options.horizon);
    report.rank_checks.push_back(
        check_rank_bound(inst.history, inst.similarity, inst.kx, options.lambda));
  }
  const KernelSpec kx = KernelSpec::gaussian(0.5);
  for (std::size_t i = 0; i < options.monotonicity_sets; ++i) {
    auto rng = make_rng(seed, streams::theory_contexts, i);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<AugmentedContext> history;
    for (std::size_t t = 0; t <= options.horizon; ++t) {
      history.push_back({t % options.tasks, ContextVector{{unit(rng), unit(rng)}}});
    }
    report.monotonicity.push_back(
        check_monotonicity(options.mu_grid, history, options.tasks, kx, options.lambda));
  }
  return report;
}

}  // namespace mtcb
