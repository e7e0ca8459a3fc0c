#include "mtcb/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "mtcb/error.hpp"

namespace mtcb {

namespace {

void check_same_dimension(const char* where, const ContextVector& x, const ContextVector& y) {
  if (x.size() != y.size()) {
    throw DimensionError(where, static_cast<std::size_t>(x.size()),
                         static_cast<std::size_t>(y.size()));
  }
}

double median_of(std::vector<double>& values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double median = values[mid];
  if (values.size() % 2 == 0) {
    const double lower =
        *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median;
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::gaussian:
      return "gaussian";
    case KernelFamily::linear:
      return "linear";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "gaussian" || name == "rbf") return KernelFamily::gaussian;
  if (name == "linear") return KernelFamily::linear;
  throw ConfigError("unknown kernel family '" + std::string(name) + "'");
}

KernelSpec KernelSpec::gaussian(double lengthscale, double output_scale) {
  KernelSpec spec{KernelFamily::gaussian, lengthscale, output_scale};
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::linear(double output_scale) {
  KernelSpec spec{KernelFamily::linear, 1.0, output_scale};
  spec.validate();
  return spec;
}

void KernelSpec::validate() const {
  if (!(std::isfinite(output_scale) && output_scale > 0.0)) {
    throw ConfigError("kernel output_scale must be positive, got " +
                      std::to_string(output_scale));
  }
  if (family == KernelFamily::gaussian && !(std::isfinite(lengthscale) && lengthscale > 0.0)) {
    throw ConfigError("gaussian kernel lengthscale must be positive, got " +
                      std::to_string(lengthscale));
  }
}

double eval_kernel(const KernelSpec& spec, const ContextVector& x, const ContextVector& y) {
  check_same_dimension("eval_kernel", x, y);
  switch (spec.family) {
    case KernelFamily::gaussian: {
      const double d2 = (x - y).squaredNorm();
      return spec.output_scale * std::exp(-d2 / (2.0 * spec.lengthscale * spec.lengthscale));
    }
    case KernelFamily::linear:
      return spec.output_scale * x.dot(y);
  }
  return 0.0;
}

double self_kernel(const KernelSpec& spec, const ContextVector& x) {
  if (spec.family == KernelFamily::gaussian) return spec.output_scale;
  return spec.output_scale * x.squaredNorm();
}

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const ContextVector> xs) {
  if (xs.empty()) throw DataError("gram: empty point list");
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    check_same_dimension("gram", xs[0], xs[static_cast<std::size_t>(i)]);
    k(i, i) = eval_kernel(spec, xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v =
          eval_kernel(spec, xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec, std::span<const ContextVector> rows,
                           std::span<const ContextVector> cols) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          eval_kernel(spec, rows[i], cols[j]);
    }
  }
  return k;
}

double median_heuristic(std::span<const ContextVector> xs) {
  if (xs.size() < 2) throw DataError("median_heuristic: need at least two points");
  std::vector<double> distances;
  distances.reserve(xs.size() * (xs.size() - 1) / 2);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_same_dimension("median_heuristic", xs[0], xs[i]);
    for (std::size_t j = 0; j < i; ++j) distances.push_back((xs[i] - xs[j]).norm());
  }
  const double median = median_of(distances);
  return median > 0.0 ? median : 1.0;
}

double median_heuristic(std::span<const double> values) {
  if (values.size() < 2) throw DataError("median_heuristic: need at least two values");
  std::vector<double> distances;
  distances.reserve(values.size() * (values.size() - 1) / 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) distances.push_back(std::abs(values[i] - values[j]));
  }
  const double median = median_of(distances);
  return median > 0.0 ? median : 1.0;
}

}  // namespace mtcb
