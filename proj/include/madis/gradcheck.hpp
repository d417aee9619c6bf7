#pragma once

#include "madis/autograd.hpp"
#include "madis/ops.hpp"

#include <algorithm>
#include <functional>

namespace madis {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<double> per_input;  ///< worst relative error per checked input
  bool finite = true;             ///< false if any analytic gradient is non-finite
};

/// Compares the analytic backward of a scalar-valued function against central
/// finite differences, elementwise, at 64-bit precision.
///
/// `f` rebuilds the graph from the given leaf variables on every call; the
/// relative error is |a-n| / max(|a|,|n|,1e-8).
inline GradCheckReport grad_check(
    const std::function<Var<double>(std::vector<Var<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double eps = 1e-4) {
  GradCheckReport report;
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (auto& t : inputs) leaves.push_back(make_var(t, true));
  Var<double> out = f(leaves);
  if (out->value.numel() != 1) out = sum(out);
  backward(out);

  for (size_t i = 0; i < leaves.size(); ++i) {
    double worst = 0.0;
    Tensor<double>& x = inputs[i];
    const Tensor<double>& analytic =
        leaves[i]->grad_ready ? leaves[i]->grad : Tensor<double>::zeros(x.shape());
    if (!analytic.all_finite()) report.finite = false;
    for (Eigen::Index j = 0; j < x.numel(); ++j) {
      double saved = x[j];
      auto eval = [&](double v) {
        x[j] = v;
        std::vector<Var<double>> vars;
        for (auto& t : inputs) vars.push_back(make_var(t, false));
        Var<double> y = f(vars);
        if (y->value.numel() != 1) y = sum(y);
        return y->value[0];
      };
      double numeric = (eval(saved + eps) - eval(saved - eps)) / (2 * eps);
      x[j] = saved;
      double a = analytic[j];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
    report.per_input.push_back(worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

}  // namespace madis
