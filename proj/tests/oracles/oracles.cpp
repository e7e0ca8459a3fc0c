#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>

namespace oracle {

double kernel(const mtcb::KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (spec.family == mtcb::KernelFamily::linear) {
    double dot = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) dot += x(i) * y(i);
    return spec.output_scale * dot;
  }
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) d2 += (x(i) - y(i)) * (x(i) - y(i));
  return spec.output_scale * std::exp(-d2 / (2.0 * spec.lengthscale * spec.lengthscale));
}

Eigen::MatrixXd augmented_gram(const mtcb::KernelSpec& kx, const Eigen::MatrixXd& kz,
                               std::span<const mtcb::AugmentedContext> xs) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& a = xs[static_cast<std::size_t>(i)];
      const auto& b = xs[static_cast<std::size_t>(j)];
      k(i, j) = kz(static_cast<Eigen::Index>(a.task), static_cast<Eigen::Index>(b.task)) *
                kernel(kx, a.context, b.context);
    }
  }
  return k;
}

Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& gram, double ridge) {
  const Eigen::MatrixXd m = gram + ridge * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
  return m.fullPivLu().inverse();
}

DensePrediction dense_predict(const mtcb::KernelSpec& kx, const Eigen::MatrixXd& kz,
                              std::span<const mtcb::AugmentedContext> history,
                              std::span<const double> rewards, double ridge,
                              const mtcb::AugmentedContext& query) {
  const double self = kz(static_cast<Eigen::Index>(query.task),
                         static_cast<Eigen::Index>(query.task)) *
                      kernel(kx, query.context, query.context);
  if (history.empty()) return {0.0, std::sqrt(std::max(self, 0.0))};
  const auto n = static_cast<Eigen::Index>(history.size());
  Eigen::VectorXd kq(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& h = history[static_cast<std::size_t>(i)];
    kq(i) = kz(static_cast<Eigen::Index>(h.task), static_cast<Eigen::Index>(query.task)) *
            kernel(kx, h.context, query.context);
    y(i) = rewards[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd m =
      augmented_gram(kx, kz, history) + ridge * Eigen::MatrixXd::Identity(n, n);
  const auto lu = m.fullPivLu();
  const double mean = kq.dot(lu.solve(y));
  const double quad = kq.dot(lu.solve(kq));
  return {mean, std::sqrt(std::max(self - quad, 0.0))};
}

std::vector<double> dense_krr(const mtcb::KernelSpec& kx, std::span<const Eigen::VectorXd> train_x,
                              std::span<const double> train_y,
                              std::span<const Eigen::VectorXd> test, double ridge) {
  const auto n = static_cast<Eigen::Index>(train_x.size());
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = train_y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = kernel(kx, train_x[static_cast<std::size_t>(i)], train_x[static_cast<std::size_t>(j)]);
  }
  k.diagonal().array() += ridge;
  const Eigen::VectorXd a = k.fullPivLu().solve(y);
  std::vector<double> out;
  for (const auto& t : test) {
    double f = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) f += kernel(kx, train_x[static_cast<std::size_t>(i)], t) * a(i);
    out.push_back(f);
  }
  return out;
}

namespace {

// Psi (Phi^T Phi + lambda I)^{-1} Phi^T with features as 1 x n rows.
double operator_1d(std::span<const double> x, std::span<const double> y, double lambda,
                   double kx_scale, double ky_scale) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::RowVectorXd phi(n);
  Eigen::RowVectorXd psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phi(i) = std::sqrt(kx_scale) * x[static_cast<std::size_t>(i)];
    psi(i) = std::sqrt(ky_scale) * y[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd m = phi.transpose() * phi + lambda * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd op = psi * m.fullPivLu().inverse() * phi.transpose();
  return op(0, 0);
}

}  // namespace

double cke_linear_1d(std::span<const double> xm, std::span<const double> ym,
                     std::span<const double> xn, std::span<const double> yn, double lambda,
                     double kx_scale, double ky_scale) {
  const double d = operator_1d(xm, ym, lambda, kx_scale, ky_scale) -
                   operator_1d(xn, yn, lambda, kx_scale, ky_scale);
  return d * d;
}

double knn_reward(std::span<const mtcb::TraceRecord> records, std::size_t k,
                  const mtcb::TraceState& state, int action) {
  constexpr std::size_t cols = mtcb::kStateDim + 1;
  auto row = [](const mtcb::TraceRecord& r) {
    std::array<double, cols> v{};
    for (std::size_t c = 0; c < mtcb::kStateDim; ++c) v[c] = r.state[c];
    v[mtcb::kStateDim] = r.action;
    return v;
  };
  std::array<double, cols> mean{};
  std::array<double, cols> sd{};
  for (const auto& r : records) {
    const auto v = row(r);
    for (std::size_t c = 0; c < cols; ++c) mean[c] += v[c];
  }
  for (auto& m : mean) m /= static_cast<double>(records.size());
  for (const auto& r : records) {
    const auto v = row(r);
    for (std::size_t c = 0; c < cols; ++c) sd[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
  }
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(records.size()));
    if (s == 0.0) s = 1.0;
  }
  mtcb::TraceRecord q;
  q.state = state;
  q.action = action;
  const auto qv = row(q);
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto v = row(records[i]);
    double d2 = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double diff = (v[c] - mean[c]) / sd[c] - (qv[c] - mean[c]) / sd[c];
      d2 += diff * diff;
    }
    dist.emplace_back(d2, i);
  }
  std::sort(dist.begin(), dist.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += records[dist[i].second].reward;
  return sum / static_cast<double>(k);
}

double uniform_policy_regret(std::size_t task, std::size_t nodes) {
  const double m = static_cast<double>(task + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double u0 = (static_cast<double>(i) + 0.5) / static_cast<double>(nodes);
    double best = -1e300;
    double sum = 0.0;
    for (int a = 1; a <= 5; ++a) {
      const double d = u0 - a / 5.0 + 0.3 - m / 10.0;
      const double r = 1.0 - d * d;
      best = std::max(best, r);
      sum += r;
    }
    total += best - sum / 5.0;
  }
  return total / static_cast<double>(nodes);
}

}  // namespace oracle
