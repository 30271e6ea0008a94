#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "patchmil/nn/tensor.hpp"

namespace patchmil::nn {

/// Central differences (L(p+eps) - L(p-eps)) / 2eps for every coordinate of every tensor.
/// The loss must be differentiable at p; kinks (|p| at 0, ReLU at 0) give meaningless results.
template <typename T>
ParamSet<T> finite_diff_grad(const std::function<T(const ParamSet<T>&)>& loss, const ParamSet<T>& params, T eps) {
  ParamSet<T> grad = params.zeros_like();
  ParamSet<T> probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i)
    for (std::size_t j = 0; j < probe.at(i).numel(); ++j) {
      T& v = probe.at(i).values[j];
      const T saved = v;
      v = saved + eps;
      const T up = loss(probe);
      v = saved - eps;
      const T down = loss(probe);
      v = saved;
      grad.at(i).values[j] = (up - down) / (2 * eps);
    }
  return grad;
}

struct GradCompare {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]"
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor) per coordinate, worst case reported.
template <typename T>
GradCompare compare_gradients(const ParamSet<T>& analytic, const ParamSet<T>& numeric, double floor = 1e-6) {
  analytic.check_same_layout(numeric, "compare_gradients");
  GradCompare out;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    for (std::size_t j = 0; j < analytic.at(i).numel(); ++j) {
      const double a = analytic.at(i).values[j];
      const double n = numeric.at(i).values[j];
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
      if (rel > out.max_rel_error || !std::isfinite(rel)) {
        out.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        out.worst = analytic.name(i) + "[" + std::to_string(j) + "]";
        out.analytic = a;
        out.numeric = n;
      }
    }
  return out;
}

}  // namespace patchmil::nn
