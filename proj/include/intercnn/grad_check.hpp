#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "intercnn/autodiff.hpp"

namespace icnn {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Lower bound of the relative-error denominator, so that gradients at the
  /// level of f64 round-off are compared absolutely.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Builds a scalar on the given tape from one Var per parameter.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares tape gradients of f against central differences
/// (f(p+eps e_i) - f(p-eps e_i)) / (2 eps). Parameters must be f64.
GradCheckReport grad_check(const TapeFunction& f, std::span<const Tensor> params, const GradCheckOptions& opts = {},
                           std::span<const std::string> names = {});

/// Same comparison for externally supplied analytic gradients.
GradCheckReport compare_gradients(const std::function<double(std::span<const Tensor>)>& value,
                                  std::span<const Tensor> params, std::span<const Tensor> analytic,
                                  const GradCheckOptions& opts = {}, std::span<const std::string> names = {});

/// Runs f once and returns the analytic gradient for each parameter.
std::vector<Tensor> tape_gradients(const TapeFunction& f, std::span<const Tensor> params);
double tape_value(const TapeFunction& f, std::span<const Tensor> params);

}  // namespace icnn
