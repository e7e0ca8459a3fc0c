#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtcb/kernels.hpp"
#include "mtcb/krr.hpp"
#include "mtcb/similarity_matrix.hpp"

namespace mtcb {

/// log g = log det(K~ + lambda I) - n log lambda over the given history,
/// from a Cholesky factorization. No jitter is added, so an all-zero kernel
/// gives exactly 0.
double compute_log_g(std::span<const AugmentedContext> history, const SimilarityMatrix& similarity,
                     const KernelSpec& kx, double lambda);

/// Number of eigenvalues above rel_tol * max(|eigenvalue|) of a symmetric
/// matrix.
std::size_t numerical_rank(const Eigen::MatrixXd& symmetric, double rel_tol = 1e-9);

struct RankBoundCheck {
  double log_g = 0.0;
  std::size_t rank_z = 0;
  std::size_t rank_x = 0;
  /// Largest diagonal entry of K~, used as the kernel bound c.
  double kernel_bound = 0.0;
  double bound = 0.0;  // r_z r_x log(((T+1) c + lambda) / lambda)
  bool holds() const { return log_g <= bound; }
};

/// Evaluates both sides of the rank bound for a history of T+1 contexts.
RankBoundCheck check_rank_bound(std::span<const AugmentedContext> history,
                                const SimilarityMatrix& similarity, const KernelSpec& kx,
                                double lambda);

struct MonotonicityCheck {
  std::vector<double> mu;
  std::vector<double> log_g;  // one per mu
  /// Indices i with g(mu[i+1]) > g(mu[i]) by more than the relative
  /// tolerance.
  std::vector<std::size_t> violations;
};

/// log g under uniform similarity mu for each value of an ascending grid in
/// [0, 1], on one fixed history.
MonotonicityCheck check_monotonicity(std::span<const double> mu_grid,
                                     std::span<const AugmentedContext> history,
                                     std::size_t tasks, const KernelSpec& kx, double lambda,
                                     double rel_tol = 1e-9);

struct TheoryInstance {
  SimilarityMatrix similarity = SimilarityMatrix::identity(1);
  KernelSpec kx;
  std::vector<AugmentedContext> history;
};

/// Random instance with T+1 contexts assigned to M tasks round-robin. The
/// task similarity cycles through all-ones, a block matrix and a random
/// Gaussian-kernel matrix; the context kernel alternates between linear
/// kernels in 1-3 dimensions and a Gaussian, so both ranks vary.
TheoryInstance random_theory_instance(std::uint64_t seed, std::size_t index, std::size_t tasks,
                                      std::size_t horizon);

struct TheoryReport {
  double lambda = 1.0;
  std::vector<RankBoundCheck> rank_checks;
  std::vector<MonotonicityCheck> monotonicity;

  std::size_t rank_violations() const;
  std::size_t monotonicity_violations() const;
};

struct TheoryOptions {
  std::size_t tasks = 3;
  std::size_t horizon = 20;
  std::size_t rank_instances = 50;
  std::size_t monotonicity_sets = 20;
  std::vector<double> mu_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double lambda = 1.0;
};

TheoryReport run_theory_checks(const TheoryOptions& options, std::uint64_t seed);

}  // namespace mtcb
