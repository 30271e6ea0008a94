#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "patchmil/nn/tensor.hpp"

namespace testing {

struct Coord {
  std::size_t tensor;
  std::size_t index;
};

/// Every coordinate of tensors with at most `per_tensor` values, a uniform sample of the rest.
inline std::vector<Coord> sample_coords(const patchmil::nn::ParamSet<double>& p, std::size_t per_tensor,
                                        std::mt19937_64& rng) {
  std::vector<Coord> out;
  for (std::size_t t = 0; t < p.size(); ++t) {
    const std::size_t n = p.at(t).numel();
    if (n <= per_tensor) {
      for (std::size_t j = 0; j < n; ++j) out.push_back({t, j});
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t j = 0; j < per_tensor; ++j) out.push_back({t, pick(rng)});
    }
  }
  return out;
}

struct CheckResult {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences at the given coordinates against `analytic`; relative error
/// |a - n| / max(|a|, |n|, floor).
inline CheckResult check_coords(const std::function<double(const patchmil::nn::ParamSet<double>&)>& loss,
                                patchmil::nn::ParamSet<double> params,
                                const patchmil::nn::ParamSet<double>& analytic, const std::vector<Coord>& coords,
                                double eps, double floor) {
  CheckResult r;
  for (const auto& c : coords) {
    double& v = params.at(c.tensor).values[c.index];
    const double saved = v;
    v = saved + eps;
    const double up = loss(params);
    v = saved - eps;
    const double down = loss(params);
    v = saved;
    const double num = (up - down) / (2 * eps);
    const double a = analytic.at(c.tensor).values[c.index];
    const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
    ++r.checked;
    if (!(rel <= r.max_rel)) {
      r.max_rel = std::isfinite(rel) ? rel : INFINITY;
      r.worst = params.name(c.tensor) + "[" + std::to_string(c.index) + "] analytic " + std::to_string(a) +
                " numeric " + std::to_string(num);
    }
  }
  return r;
}

}  // namespace testing
