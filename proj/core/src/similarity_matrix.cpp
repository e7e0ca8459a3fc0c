#include "mtcb/similarity_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mtcb/csv.hpp"
#include "mtcb/error.hpp"

namespace mtcb {

namespace {
constexpr double kSnapTolerance = 1e-9;
}

SimilarityMatrix::SimilarityMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
    throw DataError(fmt::format("similarity matrix must be square and non-empty, got {}x{}",
                                entries_.rows(), entries_.cols()));
  }
  const auto m = entries_.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double v = entries_(i, j);
      if (!std::isfinite(v) || v < -kSnapTolerance || v > 1.0 + kSnapTolerance) {
        throw DataError(fmt::format("similarity entry ({}, {}) = {} outside [0, 1]", i, j, v));
      }
      if (std::abs(v - entries_(j, i)) > kSnapTolerance) {
        throw DataError(fmt::format("similarity matrix not symmetric at ({}, {})", i, j));
      }
    }
  }
  entries_ = (0.5 * (entries_ + entries_.transpose())).cwiseMax(0.0).cwiseMin(1.0);
  entries_.diagonal().setOnes();
}

SimilarityMatrix SimilarityMatrix::identity(std::size_t tasks) {
  const auto m = static_cast<Eigen::Index>(tasks);
  return SimilarityMatrix(Eigen::MatrixXd::Identity(m, m));
}

SimilarityMatrix SimilarityMatrix::uniform(std::size_t tasks, double mu) {
  const auto m = static_cast<Eigen::Index>(tasks);
  Eigen::MatrixXd k = Eigen::MatrixXd::Constant(m, m, mu);
  k.diagonal().setOnes();
  return SimilarityMatrix(std::move(k));
}

double SimilarityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(entries_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool SimilarityMatrix::is_identity() const {
  const auto m = entries_.rows();
  return (entries_ - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() == 0.0;
}

SimilarityMatrix project_to_psd(const SimilarityMatrix& similarity) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(similarity.matrix());
  if (solver.eigenvalues().minCoeff() >= 0.0) return similarity;
  const Eigen::VectorXd clipped = solver.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd k =
      solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
  const Eigen::VectorXd d = k.diagonal().cwiseMax(1e-12).cwiseSqrt().cwiseInverse();
  k = d.asDiagonal() * k * d.asDiagonal();
  return SimilarityMatrix(k.cwiseMax(0.0).cwiseMin(1.0));
}

void write_similarity_csv(const SimilarityMatrix& similarity, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write similarity file " + path.string());
  const auto m = similarity.size();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j) out << ',';
      out << fmt::format("{:.17g}", similarity(i, j));
    }
    out << '\n';
  }
}

SimilarityMatrix read_similarity_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read similarity file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& field : split_csv_line(line)) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError(fmt::format("{}: non-numeric similarity entry '{}'", path.string(), field));
      }
    }
    rows.push_back(std::move(row));
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
      throw DataError(fmt::format("{}: row {} has {} entries, expected {}", path.string(), i,
                                  rows[static_cast<std::size_t>(i)].size(), m));
    }
    for (Eigen::Index j = 0; j < m; ++j) k(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return SimilarityMatrix(std::move(k));
}

}  // namespace mtcb
