#include <cmath>

#include <fmt/format.h>

#include "mtcb/envs.hpp"
#include "mtcb/error.hpp"
#include "mtcb/rng.hpp"

namespace mtcb {

void GpRegressionConfig::validate() const {
  if (tasks == 0) throw ConfigError("gp: tasks must be positive");
  if (points_per_task == 0) throw ConfigError("gp: points_per_task must be positive");
  if (!(sim_g >= 0.0 && sim_g <= 1.0)) {
    throw ConfigError(fmt::format("gp: sim_g must lie in [0, 1], got {}", sim_g));
  }
  if (!(noise_variance >= 0.0)) throw ConfigError("gp: noise_variance must be non-negative");
  if (!(lengthscale > 0.0)) throw ConfigError("gp: lengthscale must be positive");
  if (train_size == 0 || train_size > points_per_task) {
    throw ConfigError(fmt::format("gp: train_size must lie in [1, {}]", points_per_task));
  }
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
  if (solver.info() != Eigen::Success) throw DataError("psd_factor: eigendecomposition failed");
  const double n = static_cast<double>(m.rows());
  const double tol = -1e-8 * std::max(m.trace(), 0.0) / n;
  if (solver.eigenvalues().minCoeff() < tol) {
    throw DataError(fmt::format("covariance not positive semidefinite (min eigenvalue {})",
                                solver.eigenvalues().minCoeff()));
  }
  return solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

namespace {

const GpRegressionConfig& checked(const GpRegressionConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

GpTaskGenerator::GpTaskGenerator(GpRegressionConfig config)
    : config_(checked(config)), kz_(SimilarityMatrix::uniform(config_.tasks, config_.sim_g)) {
  const auto kx = KernelSpec::gaussian(config_.lengthscale);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = config_.points_per_task;
  const std::size_t designs = config_.shared_design ? 1 : config_.tasks;
  std::vector<std::vector<ContextVector>> distinct(designs);
  for (std::size_t d = 0; d < designs; ++d) {
    auto rng = make_rng(config_.seed, streams::gp_design, d);
    for (std::size_t i = 0; i < n; ++i) {
      ContextVector x(2);
      x(0) = unit(rng);
      x(1) = unit(rng);
      distinct[d].push_back(std::move(x));
    }
  }
  for (std::size_t t = 0; t < config_.tasks; ++t) {
    designs_.push_back(distinct[config_.shared_design ? 0 : t]);
  }

  const auto total = static_cast<Eigen::Index>(config_.tasks * n);
  if (config_.shared_design) {
    // Factor of K_Z (x) K_X is the Kronecker product of the factors.
    const Eigen::MatrixXd fz = psd_factor(kz_.matrix());
    const Eigen::MatrixXd fx = psd_factor(gram(kx, designs_[0]));
    const auto nx = fx.rows();
    factor_.resize(total, total);
    for (Eigen::Index i = 0; i < fz.rows(); ++i) {
      for (Eigen::Index j = 0; j < fz.cols(); ++j) {
        factor_.block(i * nx, j * nx, nx, nx) = fz(i, j) * fx;
      }
    }
  } else {
    Eigen::MatrixXd cov(total, total);
    for (std::size_t a = 0; a < config_.tasks; ++a) {
      for (std::size_t b = 0; b < config_.tasks; ++b) {
        cov.block(static_cast<Eigen::Index>(a * n), static_cast<Eigen::Index>(b * n),
                  static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) =
            kz_(a, b) * cross_gram(kx, designs_[a], designs_[b]);
      }
    }
    factor_ = psd_factor(cov);
  }
}

Eigen::MatrixXd GpTaskGenerator::covariance() const {
  Eigen::MatrixXd cov = factor_ * factor_.transpose();
  cov.diagonal().array() += config_.noise_variance;
  return cov;
}

Eigen::VectorXd GpTaskGenerator::draw_targets(std::size_t draw) const {
  auto rng = make_rng(config_.seed, streams::gp_draw, draw);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto total = factor_.rows();
  Eigen::VectorXd z(factor_.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  Eigen::VectorXd noise(total);
  for (Eigen::Index i = 0; i < total; ++i) noise(i) = normal(rng);
  return factor_ * z + std::sqrt(config_.noise_variance) * noise;
}

std::vector<GpTaskSplit> GpTaskGenerator::draw(std::size_t draw) const {
  const Eigen::VectorXd y = draw_targets(draw);
  const std::size_t n = config_.points_per_task;
  std::vector<GpTaskSplit> out(config_.tasks);
  for (std::size_t t = 0; t < config_.tasks; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double target = y(static_cast<Eigen::Index>(t * n + i));
      auto& part = i < config_.train_size ? out[t].train : out[t].test;
      part.add(designs_[t][i], target);
    }
  }
  return out;
}

std::vector<GpTaskSplit> generate_gp_tasks(const GpRegressionConfig& config) {
  return GpTaskGenerator(config).draw(0);
}

}  // namespace mtcb
