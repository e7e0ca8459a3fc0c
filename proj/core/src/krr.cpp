#include "mtcb/krr.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mtcb/error.hpp"

namespace mtcb {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_lambda(double lambda) {
  if (!(std::isfinite(lambda) && lambda > 0.0)) {
    throw ConfigError(fmt::format("ridge parameter lambda must be positive, got {}", lambda));
  }
}

std::vector<double> solve_and_predict(Eigen::MatrixXd k, const Eigen::MatrixXd& k_test,
                                      std::span<const double> y, double ridge) {
  k.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw Error("kernel ridge regression: factorization failed");
  const Eigen::VectorXd alpha =
      llt.solve(Eigen::Map<const Eigen::VectorXd>(y.data(), idx(y.size())));
  const Eigen::VectorXd pred = k_test.transpose() * alpha;
  return {pred.data(), pred.data() + pred.size()};
}

}  // namespace

double augmented_kernel(const KernelSpec& kx, const SimilarityMatrix& similarity,
                        const AugmentedContext& a, const AugmentedContext& b) {
  return product_kernel(similarity(a.task, b.task), eval_kernel(kx, a.context, b.context));
}

Eigen::MatrixXd augmented_gram(const KernelSpec& kx, const SimilarityMatrix& similarity,
                               std::span<const AugmentedContext> xs) {
  const auto n = idx(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double v = augmented_kernel(kx, similarity, xs[static_cast<std::size_t>(i)],
                                        xs[static_cast<std::size_t>(j)]);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

std::vector<double> fit_predict_batch(std::span<const ContextVector> train_x,
                                      std::span<const double> train_y,
                                      std::span<const ContextVector> test,
                                      const KernelSpec& kx, double lambda) {
  if (train_x.empty()) throw DataError("fit_predict_batch: empty training set");
  if (train_x.size() != train_y.size()) {
    throw DimensionError("fit_predict_batch: targets", train_x.size(), train_y.size());
  }
  check_lambda(lambda);
  return solve_and_predict(gram(kx, train_x), cross_gram(kx, train_x, test), train_y,
                           lambda + kx.jitter());
}

std::vector<double> fit_predict_multitask(std::span<const AugmentedContext> train,
                                          std::span<const double> train_y,
                                          std::span<const AugmentedContext> test,
                                          const KernelSpec& kx,
                                          const SimilarityMatrix& similarity, double lambda) {
  if (train.empty()) throw DataError("fit_predict_multitask: empty training set");
  if (train.size() != train_y.size()) {
    throw DimensionError("fit_predict_multitask: targets", train.size(), train_y.size());
  }
  check_lambda(lambda);
  Eigen::MatrixXd k_test(idx(train.size()), idx(test.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < test.size(); ++j) {
      k_test(idx(i), idx(j)) = augmented_kernel(kx, similarity, train[i], test[j]);
    }
  }
  return solve_and_predict(augmented_gram(kx, similarity, train), k_test, train_y,
                           lambda + kx.jitter());
}

// ---------------------------------------------------------------------------

MultiTaskModel::MultiTaskModel(KernelSpec kx, SimilarityMatrix similarity, double lambda,
                               ModelOptions options)
    : kx_(kx), similarity_(std::move(similarity)), lambda_(lambda), options_(options) {
  kx_.validate();
  check_lambda(lambda_);
}

void MultiTaskModel::check_input(const AugmentedContext& x) const {
  if (x.task >= similarity_.size()) {
    throw Error(fmt::format("task id {} out of range (model has {} tasks)", x.task,
                            similarity_.size()));
  }
  if (dim_ >= 0 && x.context.size() != dim_) {
    throw DimensionError("MultiTaskModel: context", static_cast<std::size_t>(dim_),
                         static_cast<std::size_t>(x.context.size()));
  }
  if (!x.context.allFinite()) throw DataError("MultiTaskModel: non-finite context entry");
}

double MultiTaskModel::self_value(const AugmentedContext& x) const {
  return product_kernel(similarity_(x.task, x.task), self_kernel(kx_, x.context));
}

void MultiTaskModel::kernel_column(std::size_t task, const ContextVector& x, std::size_t count,
                                   Eigen::Ref<Eigen::VectorXd> out) const {
  const Index n = idx(count);
  const auto pts = points_.leftCols(n);
  if (kx_.family == KernelFamily::gaussian) {
    const double scale = -1.0 / (2.0 * kx_.lengthscale * kx_.lengthscale);
    out = ((pts.colwise() - x).colwise().squaredNorm().transpose().array() * scale).exp() *
          kx_.output_scale;
  } else {
    out = (pts.transpose() * x) * kx_.output_scale;
  }
  const auto& kz = similarity_.matrix();
  for (Index i = 0; i < n; ++i) out(i) *= kz(idx(task), idx(tasks_[static_cast<std::size_t>(i)]));
}

Prediction MultiTaskModel::predict(const AugmentedContext& x) const {
  return predict(std::span<const AugmentedContext>(&x, 1)).front();
}

std::vector<Prediction> MultiTaskModel::predict(std::size_t task,
                                                std::span<const ContextVector> contexts) const {
  std::vector<AugmentedContext> queries;
  queries.reserve(contexts.size());
  for (const auto& c : contexts) queries.push_back({task, c});
  return predict(queries);
}

std::vector<Prediction> MultiTaskModel::predict(std::span<const AugmentedContext> queries,
                                                QueryWork* work) const {
  for (const auto& x : queries) check_input(x);
  std::vector<Prediction> out(queries.size());
  if (work) {
    work->model_version = version_;
    work->k.resize(0, 0);
    work->z.resize(0, 0);
  }
  if (n_ == 0) {
    for (std::size_t j = 0; j < queries.size(); ++j) out[j].width = std::sqrt(self_value(queries[j]));
    return out;
  }

  const Index n = idx(n_);
  const Index q = idx(queries.size());
  Eigen::MatrixXd kq(n, q);
  for (Index j = 0; j < q; ++j) {
    const auto& x = queries[static_cast<std::size_t>(j)];
    kernel_column(x.task, x.context, n_, kq.col(j));
  }

  // One pass over the stored triangle for every query:
  // k^T A k = sum_i A_ii k_i^2 + 2 k^T (strict_lower(A) k)
  const auto inv = inverse_.topLeftCorner(n, n);
  Eigen::MatrixXd z(n, q);
  z.noalias() = inv.triangularView<Eigen::StrictlyLower>() * kq;
  const Eigen::VectorXd diag = inv.diagonal();
  const Eigen::VectorXd means = kq.transpose() * alpha_.head(n);

  for (Index j = 0; j < q; ++j) {
    const double quad =
        2.0 * kq.col(j).dot(z.col(j)) + (kq.col(j).array().square() * diag.array()).sum();
    const double self = self_value(queries[static_cast<std::size_t>(j)]);
    double var = self - quad;
    if (var < 0.0) {
      if (var < -1e-9 * std::max(1.0, self)) {
        spdlog::warn("negative predictive variance {} clamped to zero", var);
      }
      var = 0.0;
    }
    out[static_cast<std::size_t>(j)] = Prediction{means(j), std::sqrt(var)};
  }
  if (work) {
    work->k = std::move(kq);
    work->z = std::move(z);
  }
  return out;
}

void MultiTaskModel::reserve(std::size_t capacity) {
  reserve_hint_ = std::max(reserve_hint_, capacity);
  if (dim_ >= 0) grow(capacity);
}

void MultiTaskModel::grow(std::size_t needed) {
  if (needed <= capacity_) return;
  if (capacity_ == 0) needed = std::max(needed, reserve_hint_);
  std::size_t cap = std::max<std::size_t>({needed, capacity_ + capacity_ / 2, 16});
  const Index c = idx(cap);
  const Index n = idx(n_);
  const Index d = dim_;

  Eigen::MatrixXd points(d, c);
  points.leftCols(n) = points_.leftCols(n);
  points_.swap(points);

  Eigen::VectorXd rewards(c);
  rewards.head(n) = rewards_.head(n);
  rewards_.swap(rewards);

  Eigen::VectorXd alpha(c);
  alpha.head(n) = alpha_.head(n);
  alpha_.swap(alpha);

  Eigen::MatrixXd inverse(c, c);
  inverse.topLeftCorner(n, n).triangularView<Eigen::Lower>() =
      inverse_.topLeftCorner(n, n).triangularView<Eigen::Lower>();
  inverse_.swap(inverse);

  tasks_.reserve(cap);
  capacity_ = cap;
}

void MultiTaskModel::append(const AugmentedContext& x, double reward) {
  append(std::span<const AugmentedContext>(&x, 1), std::span<const double>(&reward, 1));
}

void MultiTaskModel::append(std::span<const AugmentedContext> xs,
                            std::span<const double> rewards) {
  append_impl(xs, rewards, nullptr, {});
}

void MultiTaskModel::append(std::span<const AugmentedContext> xs, std::span<const double> rewards,
                            const QueryWork& work, std::span<const std::size_t> columns) {
  if (work.model_version != version_) throw Error("MultiTaskModel::append: stale query work");
  if (columns.size() != xs.size()) {
    throw DimensionError("MultiTaskModel::append: query columns", xs.size(), columns.size());
  }
  for (const auto c : columns) {
    if (n_ > 0 && c >= static_cast<std::size_t>(work.k.cols())) {
      throw Error("MultiTaskModel::append: query column out of range");
    }
  }
  append_impl(xs, rewards, &work, columns);
}

void MultiTaskModel::append_impl(std::span<const AugmentedContext> xs,
                                 std::span<const double> rewards, const QueryWork* work,
                                 std::span<const std::size_t> columns) {
  if (xs.size() != rewards.size()) {
    throw DimensionError("MultiTaskModel::append: rewards", xs.size(), rewards.size());
  }
  if (xs.empty()) return;
  if (dim_ < 0) dim_ = xs.front().context.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_input(xs[i]);
    if (!std::isfinite(rewards[i])) throw DataError("MultiTaskModel::append: non-finite reward");
  }

  const Index n = idx(n_);
  const Index b = idx(xs.size());
  grow(n_ + xs.size());

  for (Index i = 0; i < b; ++i) {
    const auto& x = xs[static_cast<std::size_t>(i)];
    points_.col(n + i) = x.context;
    tasks_.push_back(x.task);
    rewards_(n + i) = rewards[static_cast<std::size_t>(i)];
  }

  // New block C = K~(new, new) + ridge I and cross block B = K~(old, new).
  Eigen::MatrixXd c(b, b);
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double v = augmented_kernel(kx_, similarity_, xs[static_cast<std::size_t>(i)],
                                        xs[static_cast<std::size_t>(j)]);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  c.diagonal().array() += ridge();
  const Eigen::VectorXd y_new = rewards_.segment(n, b);

  if (n == 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw Error("MultiTaskModel: new block not positive definite");
    const Eigen::MatrixXd c_inv = llt.solve(Eigen::MatrixXd::Identity(b, b));
    inverse_.topLeftCorner(b, b).triangularView<Eigen::Lower>() = c_inv;
    alpha_.head(b) = c_inv * y_new;
  } else {
    auto inv = inverse_.topLeftCorner(n, n);
    Eigen::MatrixXd cross(n, b);
    Eigen::MatrixXd w(n, b);  // A^{-1} B
    if (work) {
      // A^{-1} = strict_lower + diag + strict_lower^T; the first product is
      // already in the work.
      for (Index j = 0; j < b; ++j) {
        const auto col = idx(columns[static_cast<std::size_t>(j)]);
        cross.col(j) = work->k.col(col);
        w.col(j) = work->z.col(col);
      }
      w.noalias() += inv.triangularView<Eigen::StrictlyLower>().transpose() * cross;
      w += inv.diagonal().asDiagonal() * cross;
    } else {
      for (Index j = 0; j < b; ++j) {
        const auto& x = xs[static_cast<std::size_t>(j)];
        kernel_column(x.task, x.context, n_, cross.col(j));
      }
      w.noalias() = inv.selfadjointView<Eigen::Lower>() * cross;
    }

    // Schur complement of the existing block: S = C - B^T A^{-1} B.
    Eigen::MatrixXd s = c;
    s.noalias() -= cross.transpose() * w;
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> s_llt(s);
    if (s_llt.info() != Eigen::Success) {
      throw Error(
          "MultiTaskModel: Schur complement not positive definite; the augmented kernel is "
          "not PSD (check the similarity matrix)");
    }
    const Eigen::MatrixXd s_inv = s_llt.solve(Eigen::MatrixXd::Identity(b, b));

    // [A B; B^T C]^{-1} = [A^{-1} + W S^{-1} W^T, -W S^{-1}; -S^{-1} W^T, S^{-1}]
    const Eigen::MatrixXd v = s_llt.matrixL().solve(w.transpose()).transpose();  // W L^{-T}
    inv.selfadjointView<Eigen::Lower>().rankUpdate(v, 1.0);
    inverse_.block(n, 0, b, n).noalias() = -s_inv * w.transpose();
    inverse_.block(n, n, b, b).triangularView<Eigen::Lower>() = s_inv;

    const Eigen::VectorXd r = s_inv * (y_new - cross.transpose() * alpha_.head(n));
    alpha_.head(n).noalias() -= w * r;
    alpha_.segment(n, b) = r;
  }

  n_ += xs.size();
  ++version_;
  since_refresh_ += xs.size();
  if (options_.refresh_interval > 0 && since_refresh_ >= options_.refresh_interval) refresh();
}

Eigen::MatrixXd MultiTaskModel::regularized_gram() const {
  const Index n = idx(n_);
  Eigen::MatrixXd k(n, n);
  for (Index j = 0; j < n; ++j) {
    kernel_column(tasks_[static_cast<std::size_t>(j)], points_.col(j), n_, k.col(j));
  }
  k = 0.5 * (k + k.transpose()).eval();
  k.diagonal().array() += ridge();
  return k;
}

Eigen::MatrixXd MultiTaskModel::inverse() const {
  const Index n = idx(n_);
  Eigen::MatrixXd full(n, n);
  full = inverse_.topLeftCorner(n, n).selfadjointView<Eigen::Lower>();
  return full;
}

double MultiTaskModel::inverse_residual() const {
  if (n_ == 0) return 0.0;
  Eigen::MatrixXd r = inverse() * regularized_gram();
  r.diagonal().array() -= 1.0;
  return r.cwiseAbs().maxCoeff();
}

void MultiTaskModel::refresh() {
  since_refresh_ = 0;
  ++version_;
  if (n_ == 0) return;
  const Index n = idx(n_);
  const Eigen::MatrixXd k = regularized_gram();
  if (options_.check_residual_on_refresh) {
    Eigen::MatrixXd r = inverse() * k;
    r.diagonal().array() -= 1.0;
    last_residual_ = r.cwiseAbs().maxCoeff();
    if (last_residual_ > 1e-6) {
      spdlog::warn("maintained inverse drifted to residual {:.3g} before refresh (n = {})",
                   last_residual_, n_);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw Error("MultiTaskModel::refresh: regularized Gram matrix not positive definite");
  }
  inverse_.topLeftCorner(n, n).triangularView<Eigen::Lower>() =
      llt.solve(Eigen::MatrixXd::Identity(n, n));
  alpha_.head(n) = llt.solve(rewards_.head(n));
  ++refreshes_;
}

void MultiTaskModel::set_similarity(SimilarityMatrix similarity) {
  if (similarity.size() != similarity_.size()) {
    throw DimensionError("MultiTaskModel::set_similarity", similarity_.size(), similarity.size());
  }
  similarity_ = std::move(similarity);
  refresh();
}

std::vector<AugmentedContext> MultiTaskModel::history() const {
  std::vector<AugmentedContext> out;
  out.reserve(n_);
  for (std::size_t i = 0; i < n_; ++i) out.push_back({tasks_[i], points_.col(idx(i))});
  return out;
}

}  // namespace mtcb
