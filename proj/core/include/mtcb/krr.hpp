#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtcb/kernels.hpp"
#include "mtcb/similarity_matrix.hpp"

namespace mtcb {

/// A context tagged with the (0-based) task it belongs to.
struct AugmentedContext {
  std::size_t task = 0;
  ContextVector context;
};

struct Prediction {
  double mean = 0.0;
  double width = 0.0;
};

/// k_Z(task, task') * k_X(x, x').
double augmented_kernel(const KernelSpec& kx, const SimilarityMatrix& similarity,
                        const AugmentedContext& a, const AugmentedContext& b);

/// Gram matrix of augmented contexts (no ridge added).
Eigen::MatrixXd augmented_gram(const KernelSpec& kx, const SimilarityMatrix& similarity,
                               std::span<const AugmentedContext> xs);

/// Single-task kernel ridge regression, f(x) = k_x^T (K + lambda I)^{-1} y,
/// evaluated at every test point. The ridge includes the kernel's jitter.
std::vector<double> fit_predict_batch(std::span<const ContextVector> train_x,
                                      std::span<const double> train_y,
                                      std::span<const ContextVector> test,
                                      const KernelSpec& kx, double lambda);

/// Multi-task variant using the product kernel over augmented contexts.
std::vector<double> fit_predict_multitask(std::span<const AugmentedContext> train,
                                          std::span<const double> train_y,
                                          std::span<const AugmentedContext> test,
                                          const KernelSpec& kx,
                                          const SimilarityMatrix& similarity, double lambda);

/// Intermediate products of a batched predict(), reusable by append() for
/// queries that end up being observed, as long as the model has not changed
/// in between.
struct QueryWork {
  std::size_t model_version = 0;
  Eigen::MatrixXd k;  // kernel columns against the history, n x q
  Eigen::MatrixXd z;  // strict_lower(inverse) * k
};

struct ModelOptions {
  /// Rebuild the inverse from a fresh factorization after this many appends.
  /// Zero disables scheduled refreshes.
  std::size_t refresh_interval = 512;
  /// Measure how far the maintained inverse drifted before each refresh
  /// (costs one extra n^3 product).
  bool check_residual_on_refresh = false;
};

/// Growing multi-task regression state: the observation history together
/// with the maintained inverse (K~ + lambda I)^{-1} and weights
/// alpha = (K~ + lambda I)^{-1} y.
///
/// Appends extend the inverse with the block (Schur complement) formula in
/// O(n^2 b) for a block of b observations. Only the lower triangle of the
/// inverse is stored and updated.
///
/// Single writer; const member functions may run concurrently between
/// writes.
class MultiTaskModel {
 public:
  MultiTaskModel(KernelSpec kx, SimilarityMatrix similarity, double lambda,
                 ModelOptions options = {});

  std::size_t size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  std::size_t task_count() const noexcept { return similarity_.size(); }
  double lambda() const noexcept { return lambda_; }
  /// lambda plus the kernel jitter; the value actually added to the diagonal.
  double ridge() const noexcept { return lambda_ + kx_.jitter(); }
  const KernelSpec& kernel() const noexcept { return kx_; }
  const SimilarityMatrix& similarity() const noexcept { return similarity_; }
  const ModelOptions& options() const noexcept { return options_; }

  Prediction predict(const AugmentedContext& x) const;
  /// Predictions for several contexts of the same task. This is the hot path
  /// of every bandit round.
  std::vector<Prediction> predict(std::size_t task, std::span<const ContextVector> contexts) const;
  /// Predictions for queries of any tasks, sharing one pass over the
  /// inverse.
  std::vector<Prediction> predict(std::span<const AugmentedContext> queries,
                                  QueryWork* work = nullptr) const;

  void append(const AugmentedContext& x, double reward);
  /// Appends a block of observations with one block-inverse update.
  void append(std::span<const AugmentedContext> xs, std::span<const double> rewards);
  /// Block append of queries from an earlier predict(): xs[i] must equal the
  /// query in column columns[i] of `work`. Skips recomputing the kernel
  /// columns and half of A^{-1} B.
  void append(std::span<const AugmentedContext> xs, std::span<const double> rewards,
              const QueryWork& work, std::span<const std::size_t> columns);

  /// Recomputes the inverse and weights by direct factorization.
  void refresh();

  /// Swaps the task-similarity matrix and rebuilds the inverse.
  void set_similarity(SimilarityMatrix similarity);

  void reserve(std::size_t capacity);

  std::vector<AugmentedContext> history() const;
  Eigen::VectorXd rewards() const { return rewards_.head(static_cast<Eigen::Index>(n_)); }

  /// Dense symmetric copy of the maintained inverse.
  Eigen::MatrixXd inverse() const;
  /// K~ + ridge * I over the current history, built from scratch.
  Eigen::MatrixXd regularized_gram() const;
  /// max |inverse() * regularized_gram() - I|; O(n^3).
  double inverse_residual() const;

  std::size_t appends_since_refresh() const noexcept { return since_refresh_; }
  std::size_t refresh_count() const noexcept { return refreshes_; }
  /// Residual measured before the latest refresh (0 unless
  /// check_residual_on_refresh is set).
  double last_refresh_residual() const noexcept { return last_residual_; }

 private:
  void check_input(const AugmentedContext& x) const;
  void grow(std::size_t needed);
  /// Kernel values of (task, x) against the first `count` history points.
  void kernel_column(std::size_t task, const ContextVector& x, std::size_t count,
                     Eigen::Ref<Eigen::VectorXd> out) const;
  double self_value(const AugmentedContext& x) const;
  void append_impl(std::span<const AugmentedContext> xs, std::span<const double> rewards,
                   const QueryWork* work, std::span<const std::size_t> columns);

  KernelSpec kx_;
  SimilarityMatrix similarity_;
  double lambda_;
  ModelOptions options_;

  Eigen::Index dim_ = -1;
  std::size_t n_ = 0;
  std::size_t capacity_ = 0;
  std::size_t reserve_hint_ = 0;
  Eigen::MatrixXd points_;  // dim x capacity
  std::vector<std::size_t> tasks_;
  Eigen::VectorXd rewards_;
  Eigen::MatrixXd inverse_;  // capacity x capacity; lower triangle of the n x n block
  Eigen::VectorXd alpha_;

  std::size_t version_ = 0;  // bumped by every mutation
  std::size_t since_refresh_ = 0;
  std::size_t refreshes_ = 0;
  double last_residual_ = 0.0;
};

}  // namespace mtcb
