#include "intercnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace icnn {

namespace {

Var run(const TapeFunction& f, Tape& tape, std::span<const Tensor> params, bool requires_grad,
        std::vector<Var>& vars) {
  vars.clear();
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, requires_grad));
  Var out = f(tape, vars);
  if (out.value().numel() != 1)
    fail(ErrorKind::Contract, "grad_check needs a scalar function, got shape " + shape_str(out.shape()));
  return out;
}

}  // namespace

double tape_value(const TapeFunction& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  return run(f, tape, params, false, vars).value().at(0);
}

std::vector<Tensor> tape_gradients(const TapeFunction& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  Var out = run(f, tape, params, true, vars);
  tape.backward(out);
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* g = tape.grad(vars[i]);
    grads.push_back(g ? *g : Tensor::zeros_like(params[i]));
  }
  return grads;
}

GradCheckReport compare_gradients(const std::function<double(std::span<const Tensor>)>& value,
                                  std::span<const Tensor> params, std::span<const Tensor> analytic,
                                  const GradCheckOptions& opts, std::span<const std::string> names) {
  if (analytic.size() != params.size()) fail(ErrorKind::Contract, "one analytic gradient per parameter required");
  for (const Tensor& p : params)
    if (p.dtype() != DType::f64) fail(ErrorKind::Contract, "gradient checking requires f64 parameters");

  std::vector<Tensor> work(params.begin(), params.end());
  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  for (std::size_t pi = 0; pi < work.size(); ++pi) {
    Tensor& p = work[pi];
    if (analytic[pi].shape() != p.shape())
      fail(ErrorKind::Contract, "analytic gradient shape mismatch for parameter " + std::to_string(pi));
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double orig = p.at(i);
      p.set(i, orig + opts.eps);
      const double plus = value(work);
      p.set(i, orig - opts.eps);
      const double minus = value(work);
      p.set(i, orig);
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = analytic[pi].at(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_param = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= opts.tol;
  return report;
}

GradCheckReport grad_check(const TapeFunction& f, std::span<const Tensor> params, const GradCheckOptions& opts,
                           std::span<const std::string> names) {
  for (const Tensor& p : params)
    if (p.dtype() != DType::f64) fail(ErrorKind::Contract, "gradient checking requires f64 parameters");
  std::vector<Tensor> analytic = tape_gradients(f, params);
  return compare_gradients([&](std::span<const Tensor> ps) { return tape_value(f, ps); }, params, analytic, opts,
                           names);
}

}  // namespace icnn
