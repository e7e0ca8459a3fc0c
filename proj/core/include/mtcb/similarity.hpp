#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "mtcb/dataset.hpp"
#include "mtcb/kernels.hpp"
#include "mtcb/similarity_matrix.hpp"

namespace mtcb {

/// Squared Hilbert-Schmidt distance between the empirical conditional
/// embedding operators of two datasets:
///
///   tr(Gm Km Gm Lm) - 2 tr(Gm Kmn Gn Lnm) + tr(Gn Kn Gn Ln)
///
/// with G = (K + lambda I)^{-1}, (Kmn)_ij = kx(x_i of dm, x_j of dn) and L
/// the matching ky Gram matrices over targets. Roundoff negatives are
/// clamped to 0.
double cke_distance_sq(const TaskDataset& dm, const TaskDataset& dn, const KernelSpec& kx,
                       const KernelSpec& ky, double lambda_m, double lambda_n);

double cke_distance_sq(const TaskDataset& dm, const TaskDataset& dn, const KernelSpec& kx,
                       const KernelSpec& ky, double lambda);

struct CkeOptions {
  /// Fixed regularizer for every dataset. When unset each dataset uses
  /// lambda_per_point * its size.
  std::optional<double> lambda;
  double lambda_per_point = 0.1;
};

/// M x M matrix of pairwise squared operator distances (zero diagonal).
Eigen::MatrixXd cke_distance_matrix(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                    const KernelSpec& ky, const CkeOptions& options = {});

/// exp(-d^2 / (2 sigma^2)) of the pairwise distances, sigma being the
/// median pairwise distance (1 if that median is 0).
SimilarityMatrix similarity_from_distances(const Eigen::MatrixXd& distance_sq);

SimilarityMatrix cke_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                const KernelSpec& ky, const CkeOptions& options = {});

SimilarityMatrix cke_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                const KernelSpec& ky, double lambda);

/// 1 - sum (y - prediction)^2 / sum (y - mean y)^2. Throws mtcb::DataError
/// when the targets have zero variance.
double r_squared(std::span<const double> y, std::span<const double> prediction);

/// Average of the two cross-task R^2 values (train on one task with kernel
/// ridge regression, score on the other). Averages below `floor` become 0,
/// the rest are clamped to [0, 1]; the diagonal is 1.
SimilarityMatrix r2_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                               double lambda, double floor = -0.5);

/// Gaussian kernel over contexts with a median-heuristic lengthscale, using
/// up to max_points / M leading points of each dataset.
KernelSpec default_context_kernel(std::span<const TaskDataset> datasets,
                                  std::size_t max_points = 1000);

/// Gaussian kernel over targets with a median-heuristic lengthscale.
KernelSpec default_target_kernel(std::span<const TaskDataset> datasets,
                                 std::size_t max_points = 1000);

}  // namespace mtcb
