#include "mtcb/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mtcb/error.hpp"
#include "mtcb/krr.hpp"

namespace mtcb {

namespace {

using Index = Eigen::Index;

std::vector<ContextVector> scalars(std::span<const double> y) {
  std::vector<ContextVector> out;
  out.reserve(y.size());
  for (const double v : y) out.push_back(ContextVector::Constant(1, v));
  return out;
}

/// Per-dataset pieces reused by every pair the dataset takes part in.
struct Embedding {
  const TaskDataset* data = nullptr;
  std::vector<ContextVector> y;
  Eigen::MatrixXd g;  // (K + lambda I)^{-1}
  double self = 0.0;  // tr(G K G L)
};

void check_dataset(const TaskDataset& d, std::size_t index) {
  if (d.empty()) throw DataError(fmt::format("task {}: empty dataset", index));
  if (d.x.size() != d.y.size()) {
    throw DimensionError(fmt::format("task {}: targets", index), d.x.size(), d.y.size());
  }
  const auto dim = d.x.front().size();
  for (const auto& x : d.x) {
    if (x.size() != dim) {
      throw DimensionError(fmt::format("task {}: context", index), static_cast<std::size_t>(dim),
                           static_cast<std::size_t>(x.size()));
    }
  }
}

Embedding embed(const TaskDataset& d, const KernelSpec& kx, const KernelSpec& ky, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError(fmt::format("CKE lambda must be positive, got {}", lambda));
  Embedding e;
  e.data = &d;
  e.y = scalars(d.y);
  const Eigen::MatrixXd k = gram(kx, d.x);
  const auto n = k.rows();
  Eigen::MatrixXd reg = k;
  reg.diagonal().array() += lambda;
  e.g = Eigen::LLT<Eigen::MatrixXd>(reg).solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd l = gram(ky, e.y);
  e.self = (e.g * k * e.g).cwiseProduct(l).sum();
  return e;
}

double distance(const Embedding& a, const Embedding& b, const KernelSpec& kx,
                const KernelSpec& ky) {
  const Eigen::MatrixXd kab = cross_gram(kx, a.data->x, b.data->x);
  const Eigen::MatrixXd lab = cross_gram(ky, a.y, b.y);
  // tr(Ga Kab Gb Lba) = sum((Ga Kab Gb) .* Lab)
  const double cross = (a.g * kab * b.g).cwiseProduct(lab).sum();
  const double d = a.self - 2.0 * cross + b.self;
  if (d < -1e-9 * std::max({1.0, a.self, b.self})) {
    spdlog::warn("CKE distance {} is negative beyond roundoff", d);
  }
  return std::max(d, 0.0);
}

double dataset_lambda(const CkeOptions& options, const TaskDataset& d) {
  return options.lambda ? *options.lambda
                        : options.lambda_per_point * static_cast<double>(d.size());
}

void check_dims(std::span<const TaskDataset> datasets) {
  for (std::size_t m = 0; m < datasets.size(); ++m) check_dataset(datasets[m], m);
  for (std::size_t m = 1; m < datasets.size(); ++m) {
    if (datasets[m].x.front().size() != datasets[0].x.front().size()) {
      throw DimensionError(fmt::format("task {}: context", m),
                           static_cast<std::size_t>(datasets[0].x.front().size()),
                           static_cast<std::size_t>(datasets[m].x.front().size()));
    }
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double cke_distance_sq(const TaskDataset& dm, const TaskDataset& dn, const KernelSpec& kx,
                       const KernelSpec& ky, double lambda_m, double lambda_n) {
  const TaskDataset pair[] = {dm, dn};
  check_dims(pair);
  kx.validate();
  ky.validate();
  return distance(embed(dm, kx, ky, lambda_m), embed(dn, kx, ky, lambda_n), kx, ky);
}

double cke_distance_sq(const TaskDataset& dm, const TaskDataset& dn, const KernelSpec& kx,
                       const KernelSpec& ky, double lambda) {
  return cke_distance_sq(dm, dn, kx, ky, lambda, lambda);
}

Eigen::MatrixXd cke_distance_matrix(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                    const KernelSpec& ky, const CkeOptions& options) {
  check_dims(datasets);
  kx.validate();
  ky.validate();
  std::vector<Embedding> emb;
  emb.reserve(datasets.size());
  for (const auto& d : datasets) emb.push_back(embed(d, kx, ky, dataset_lambda(options, d)));
  const auto m = static_cast<Index>(datasets.size());
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      const double d = distance(emb[static_cast<std::size_t>(i)], emb[static_cast<std::size_t>(j)], kx, ky);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

SimilarityMatrix similarity_from_distances(const Eigen::MatrixXd& distance_sq) {
  const auto m = distance_sq.rows();
  if (m < 2 || distance_sq.cols() != m) {
    throw DataError(fmt::format("similarity needs at least two tasks, got {}x{} distances", m,
                                distance_sq.cols()));
  }
  std::vector<double> pairwise;
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) pairwise.push_back(std::sqrt(distance_sq(i, j)));
  }
  double sigma = median(pairwise);
  if (!(sigma > 0.0)) sigma = 1.0;
  Eigen::MatrixXd k = (-distance_sq.array() / (2.0 * sigma * sigma)).exp().matrix();
  k.diagonal().setOnes();
  SimilarityMatrix out(std::move(k));
  spdlog::debug("similarity: sigma_z {}, min eigenvalue {}", sigma, out.min_eigenvalue());
  return out;
}

SimilarityMatrix cke_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                const KernelSpec& ky, const CkeOptions& options) {
  if (datasets.size() < 2) throw DataError("cke_similarity needs at least two datasets");
  return similarity_from_distances(cke_distance_matrix(datasets, kx, ky, options));
}

SimilarityMatrix cke_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                                const KernelSpec& ky, double lambda) {
  CkeOptions options;
  options.lambda = lambda;
  return cke_similarity(datasets, kx, ky, options);
}

double r_squared(std::span<const double> y, std::span<const double> prediction) {
  if (y.size() != prediction.size()) throw DimensionError("r_squared: predictions", y.size(), prediction.size());
  if (y.empty()) throw DataError("r_squared: no targets");
  double mean = 0.0;
  for (const double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss += (y[i] - prediction[i]) * (y[i] - prediction[i]);
    var += (y[i] - mean) * (y[i] - mean);
  }
  if (!(var > 0.0)) throw DataError("r_squared: targets have zero variance");
  return 1.0 - ss / var;
}

SimilarityMatrix r2_similarity(std::span<const TaskDataset> datasets, const KernelSpec& kx,
                               double lambda, double floor) {
  if (datasets.size() < 2) throw DataError("r2_similarity needs at least two datasets");
  if (floor > 0.0) throw ConfigError(fmt::format("R^2 floor must be <= 0, got {}", floor));
  check_dims(datasets);
  for (std::size_t m = 0; m < datasets.size(); ++m) {
    if (datasets[m].size() < 2) {
      throw DataError(fmt::format("task {}: R^2 similarity needs at least 2 points", m));
    }
  }
  const std::size_t count = datasets.size();
  Eigen::MatrixXd r2(static_cast<Index>(count), static_cast<Index>(count));
  for (std::size_t m = 0; m < count; ++m) {
    for (std::size_t n = 0; n < count; ++n) {
      if (m == n) continue;
      const auto pred = fit_predict_batch(datasets[m].x, datasets[m].y, datasets[n].x, kx, lambda);
      try {
        r2(static_cast<Index>(m), static_cast<Index>(n)) = r_squared(datasets[n].y, pred);
      } catch (const DataError&) {
        throw DataError(fmt::format("task {}: targets have zero variance", n));
      }
    }
  }
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(static_cast<Index>(count), static_cast<Index>(count));
  for (Index i = 0; i < k.rows(); ++i) {
    for (Index j = i + 1; j < k.cols(); ++j) {
      double v = 0.5 * (r2(i, j) + r2(j, i));
      if (v < floor) v = 0.0;
      v = std::clamp(v, 0.0, 1.0);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  SimilarityMatrix out(std::move(k));
  spdlog::debug("R^2 similarity: min eigenvalue {}", out.min_eigenvalue());
  return out;
}

KernelSpec default_context_kernel(std::span<const TaskDataset> datasets, std::size_t max_points) {
  const std::size_t per_task = std::max<std::size_t>(1, max_points / std::max<std::size_t>(1, datasets.size()));
  std::vector<ContextVector> pooled;
  for (const auto& d : datasets) {
    const auto take = std::min(per_task, d.size());
    pooled.insert(pooled.end(), d.x.begin(), d.x.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return KernelSpec::gaussian(median_heuristic(pooled));
}

KernelSpec default_target_kernel(std::span<const TaskDataset> datasets, std::size_t max_points) {
  const std::size_t per_task = std::max<std::size_t>(1, max_points / std::max<std::size_t>(1, datasets.size()));
  std::vector<double> pooled;
  for (const auto& d : datasets) {
    const auto take = std::min(per_task, d.y.size());
    pooled.insert(pooled.end(), d.y.begin(), d.y.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return KernelSpec::gaussian(median_heuristic(pooled));
}

}  // namespace mtcb
