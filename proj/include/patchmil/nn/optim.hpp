#pragma once

#include <cmath>
#include <string>

#include "patchmil/nn/tensor.hpp"

namespace patchmil::nn {

enum class OptimRule { sgd_momentum, adam };

struct OptimConfig {
  OptimRule rule = OptimRule::sgd_momentum;
  double lr = 0.005;
  double weight_decay = 1e-4;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Table 4 defaults of the two stages.
inline OptimConfig ssl_sgd_defaults() { return {OptimRule::sgd_momentum, 0.005, 1e-4, 0.9}; }
inline OptimConfig mil_adam_defaults() {
  OptimConfig c;
  c.rule = OptimRule::adam;
  c.lr = 1e-6;
  c.weight_decay = 1e-5;
  return c;
}

/// Per-tensor accumulators mirroring a parameter set.
template <typename T>
struct OptimState {
  OptimConfig config;
  ParamSet<T> first;   // momentum buffer / Adam first moment
  ParamSet<T> second;  // Adam second moment
  long step = 0;

  OptimState() = default;
  OptimState(OptimConfig cfg, const ParamSet<T>& params)
      : config(cfg), first(params.zeros_like()), second(params.zeros_like()) {}
};

namespace detail {

template <typename T>
void check_grads(const ParamSet<T>& params, const ParamSet<T>& grads) {
  params.check_same_layout(grads, "optimizer");
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (T g : grads.at(i).values)
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in tensor '" + grads.name(i) + "'");
}

}  // namespace detail

/// v = mu*v + (g + wd*p); p -= lr*v. Weight decay skips bias tensors.
template <typename T>
void sgd_momentum_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimState<T>& state) {
  detail::check_grads(params, grads);
  const auto& c = state.config;
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double wd = is_bias_name(params.name(i)) ? 0.0 : c.weight_decay;
    auto& p = params.at(i).values;
    const auto& g = grads.at(i).values;
    auto& v = state.first.at(i).values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]) + wd * p[j];
      v[j] = static_cast<T>(c.momentum * v[j] + gj);
      p[j] = static_cast<T>(p[j] - c.lr * v[j]);
    }
  }
}

/// Bias-corrected Adam with L2 weight decay folded into the gradient (biases exempt).
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimState<T>& state) {
  detail::check_grads(params, grads);
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double wd = is_bias_name(params.name(i)) ? 0.0 : c.weight_decay;
    auto& p = params.at(i).values;
    const auto& g = grads.at(i).values;
    auto& m = state.first.at(i).values;
    auto& v = state.second.at(i).values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]) + wd * p[j];
      m[j] = static_cast<T>(c.beta1 * m[j] + (1.0 - c.beta1) * gj);
      v[j] = static_cast<T>(c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] = static_cast<T>(p[j] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

template <typename T>
void optimizer_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimState<T>& state) {
  if (state.config.rule == OptimRule::adam)
    adam_step(params, grads, state);
  else
    sgd_momentum_step(params, grads, state);
}

}  // namespace patchmil::nn
