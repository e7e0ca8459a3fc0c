#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mtcb {

/// A point in context space. Entries are expected to be finite and already
/// normalized by whoever builds them (environments do this).
using ContextVector = Eigen::VectorXd;

enum class KernelFamily { gaussian, linear };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Parameterized positive-definite kernel.
///
///   gaussian: output_scale * exp(-|x - y|^2 / (2 lengthscale^2))
///   linear:   output_scale * <x, y>
///
/// `lengthscale` is ignored by the linear family.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double lengthscale = 1.0;
  double output_scale = 1.0;

  static KernelSpec gaussian(double lengthscale, double output_scale = 1.0);
  static KernelSpec linear(double output_scale = 1.0);

  /// Throws mtcb::ConfigError unless lengthscale and output_scale are
  /// positive and finite.
  void validate() const;

  /// Diagonal jitter added before every factorization of a Gram matrix
  /// built from this kernel.
  double jitter() const noexcept { return 1e-8 * output_scale; }

  bool operator==(const KernelSpec&) const = default;
};

double eval_kernel(const KernelSpec& spec, const ContextVector& x, const ContextVector& y);

/// k(x, x); equals output_scale for the gaussian family.
double self_kernel(const KernelSpec& spec, const ContextVector& x);

/// Symmetric n x n matrix of pairwise kernel values. Throws on an empty list
/// or mixed dimensions.
Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const ContextVector> xs);

/// rows.size() x cols.size() matrix with entries k(rows[i], cols[j]).
Eigen::MatrixXd cross_gram(const KernelSpec& spec, std::span<const ContextVector> rows,
                           std::span<const ContextVector> cols);

/// Augmented (task x context) kernel value from its two factors.
constexpr double product_kernel(double kz_value, double kx_value) noexcept {
  return kz_value * kx_value;
}

/// Median of pairwise Euclidean distances, 1.0 when that median is zero.
/// Requires at least two points.
double median_heuristic(std::span<const ContextVector> xs);

/// Same as median_heuristic over scalars.
double median_heuristic(std::span<const double> values);

}  // namespace mtcb
