#pragma once

#include <cstddef>
#include <filesystem>

#include <Eigen/Dense>

namespace mtcb {

/// M x M task-similarity matrix K_Z: symmetric, unit diagonal, entries in
/// [0, 1]. The identity means every task is learned on its own.
class SimilarityMatrix {
 public:
  /// Validates and normalizes `entries`. Asymmetry or out-of-range values
  /// beyond 1e-9 throw mtcb::DataError; smaller deviations are snapped.
  explicit SimilarityMatrix(Eigen::MatrixXd entries);

  static SimilarityMatrix identity(std::size_t tasks);
  /// Unit diagonal, every off-diagonal entry equal to `mu`.
  static SimilarityMatrix uniform(std::size_t tasks, double mu);

  std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& matrix() const noexcept { return entries_; }

  double min_eigenvalue() const;
  bool is_identity() const;

 private:
  Eigen::MatrixXd entries_;
};

/// Nearest (Frobenius) PSD matrix with eigenvalues clipped at zero, rescaled
/// back to unit diagonal. Returns the input unchanged when it is already PSD.
SimilarityMatrix project_to_psd(const SimilarityMatrix& similarity);

/// Headerless CSV, M rows of M comma-separated values, full precision.
void write_similarity_csv(const SimilarityMatrix& similarity, const std::filesystem::path& path);
SimilarityMatrix read_similarity_csv(const std::filesystem::path& path);

}  // namespace mtcb
