#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "patchmil/nn/layers.hpp"
#include "patchmil/nn/tensor.hpp"

// Gated attention pooling and the Bernoulli bag head, templated so the same code runs in
// float for training and double for gradient checks. Embeddings H are K x M, row-major.

namespace patchmil::mil {

using nn::ParamSet;

inline constexpr double kProbClamp = 1e-7;

/// w: [L], V: [L, M], U: [L, M].
template <typename T>
ParamSet<T> make_attention_params(int embed_dim, int attention_dim) {
  if (embed_dim <= 0 || attention_dim <= 0) throw nn::ConfigError("attention: dimensions must be positive");
  ParamSet<T> p;
  p.add("w", {static_cast<std::size_t>(attention_dim)});
  p.add("V", {static_cast<std::size_t>(attention_dim), static_cast<std::size_t>(embed_dim)});
  p.add("U", {static_cast<std::size_t>(attention_dim), static_cast<std::size_t>(embed_dim)});
  return p;
}

/// Affine map M -> 1: w: [M], b: [1].
template <typename T>
ParamSet<T> make_classifier_params(int embed_dim) {
  ParamSet<T> p;
  p.add("w", {static_cast<std::size_t>(embed_dim)});
  p.add("b", {1});
  return p;
}

template <typename T>
struct BagForward {
  int K = 0;
  int M = 0;
  int L = 0;
  std::vector<T> tanh_v;  // K x L
  std::vector<T> sig_u;   // K x L
  std::vector<T> scores;  // K
  std::vector<T> a;       // K, softmax of scores
  std::vector<T> z;       // M
  T logit{0};
  T theta{0};
};

/// Scores s_k = w^T (tanh(V h_k) * sigm(U h_k)) and weights a = softmax(s).
template <typename T>
void attention_forward(std::span<const T> H, int K, const ParamSet<T>& att, BagForward<T>& f) {
  const auto& w = att.at(0);
  const auto& V = att.at(1);
  const int L = static_cast<int>(V.shape.at(0));
  const int M = static_cast<int>(V.shape.at(1));
  if (K < 1 || H.size() != static_cast<std::size_t>(K) * M) throw nn::ConfigError("attention: embedding shape mismatch");
  for (T v : H)
    if (!std::isfinite(v)) throw nn::TrainingError("attention: non-finite embedding");
  f.K = K;
  f.M = M;
  f.L = L;
  f.tanh_v.resize(static_cast<std::size_t>(K) * L);
  f.sig_u.resize(static_cast<std::size_t>(K) * L);
  nn::ConstMatMap<T> Hm(H.data(), K, M);
  nn::MatMap<T> tv(f.tanh_v.data(), K, L);
  nn::MatMap<T> su(f.sig_u.data(), K, L);
  tv.noalias() = Hm * nn::ConstMatMap<T>(V.data(), L, M).transpose();
  su.noalias() = Hm * nn::ConstMatMap<T>(att.at(2).data(), L, M).transpose();
  for (auto& v : f.tanh_v) v = std::tanh(v);
  for (auto& v : f.sig_u) v = nn::sigmoid(v);
  f.scores.resize(K);
  for (int k = 0; k < K; ++k) {
    T s{0};
    for (int l = 0; l < L; ++l) s += w.values[l] * f.tanh_v[k * L + l] * f.sig_u[k * L + l];
    f.scores[k] = s;
  }
  const T mx = *std::max_element(f.scores.begin(), f.scores.end());
  f.a.resize(K);
  T total{0};
  for (int k = 0; k < K; ++k) total += f.a[k] = std::exp(f.scores[k] - mx);
  for (auto& v : f.a) v /= total;
}

/// z = sum_k a_k h_k
template <typename T>
std::vector<T> pool(std::span<const T> H, std::span<const T> a, int M) {
  const int K = static_cast<int>(a.size());
  std::vector<T> z(M, T{0});
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) z[m] += a[k] * H[static_cast<std::size_t>(k) * M + m];
  return z;
}

template <typename T>
void bag_forward(std::span<const T> H, int K, const ParamSet<T>& att, const ParamSet<T>& cls, BagForward<T>& f) {
  attention_forward(H, K, att, f);
  f.z = pool<T>(H, f.a, f.M);
  T logit = cls.at(1).values[0];
  for (int m = 0; m < f.M; ++m) logit += cls.at(0).values[m] * f.z[m];
  f.logit = logit;
  f.theta = nn::sigmoid(logit);
}

/// Eq-5 weighted BCE on a clamped probability.
template <typename T>
T weighted_bce(T theta, int label, double w_pos, double w_neg) {
  const T t = std::clamp(theta, T(kProbClamp), T(1.0 - kProbClamp));
  return label == 1 ? T(-w_pos) * std::log(t) : T(-w_neg) * std::log(T{1} - t);
}

/// dL/dlogit for theta = sigmoid(logit); zero where the clamp is active.
template <typename T>
T weighted_bce_logit_grad(T theta, int label, double w_pos, double w_neg) {
  if (theta < T(kProbClamp) || theta > T(1.0 - kProbClamp)) return T{0};
  return label == 1 ? T(-w_pos) * (T{1} - theta) : T(w_neg) * theta;
}

/// Accumulates attention/classifier gradients and writes dL/dH (K x M) given dL/dlogit.
template <typename T>
void bag_backward(std::span<const T> H, const ParamSet<T>& att, const ParamSet<T>& cls, const BagForward<T>& f,
                  T dlogit, ParamSet<T>& att_grad, ParamSet<T>& cls_grad, std::span<T> dH) {
  const int K = f.K, M = f.M, L = f.L;
  const auto& phi = cls.at(0).values;
  std::vector<T> dz(M);
  for (int m = 0; m < M; ++m) {
    cls_grad.at(0).values[m] += dlogit * f.z[m];
    dz[m] = dlogit * phi[m];
  }
  cls_grad.at(1).values[0] += dlogit;

  // z = sum a_k h_k
  std::vector<T> da(K);
  for (int k = 0; k < K; ++k) {
    T s{0};
    for (int m = 0; m < M; ++m) {
      dH[static_cast<std::size_t>(k) * M + m] = f.a[k] * dz[m];
      s += H[static_cast<std::size_t>(k) * M + m] * dz[m];
    }
    da[k] = s;
  }
  // softmax
  T dot{0};
  for (int k = 0; k < K; ++k) dot += f.a[k] * da[k];
  std::vector<T> dpre_v(static_cast<std::size_t>(K) * L), dpre_u(static_cast<std::size_t>(K) * L);
  const auto& w = att.at(0).values;
  auto& dw = att_grad.at(0).values;
  for (int k = 0; k < K; ++k) {
    const T ds = f.a[k] * (da[k] - dot);
    for (int l = 0; l < L; ++l) {
      const T tv = f.tanh_v[k * L + l];
      const T su = f.sig_u[k * L + l];
      dw[l] += ds * tv * su;
      dpre_v[k * L + l] = ds * w[l] * su * (T{1} - tv * tv);
      dpre_u[k * L + l] = ds * w[l] * tv * su * (T{1} - su);
    }
  }
  nn::ConstMatMap<T> Hm(H.data(), K, M);
  nn::ConstMatMap<T> Dv(dpre_v.data(), K, L);
  nn::ConstMatMap<T> Du(dpre_u.data(), K, L);
  nn::MatMap<T>(att_grad.at(1).data(), L, M).noalias() += Dv.transpose() * Hm;
  nn::MatMap<T>(att_grad.at(2).data(), L, M).noalias() += Du.transpose() * Hm;
  nn::MatMap<T> dHm(dH.data(), K, M);
  dHm.noalias() += Dv * nn::ConstMatMap<T>(att.at(1).data(), L, M);
  dHm.noalias() += Du * nn::ConstMatMap<T>(att.at(2).data(), L, M);
}

}  // namespace patchmil::mil
