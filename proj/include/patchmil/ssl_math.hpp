#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "patchmil/nn/decoder.hpp"
#include "patchmil/nn/encoder.hpp"
#include "patchmil/nn/layers.hpp"
#include "patchmil/nn/tensor.hpp"

// Loss terms of the self-supervised stage, templated on the scalar type so that every
// gradient can be checked against finite differences in double precision.

namespace patchmil::ssl {

using nn::ParamSet;

/// psi_m <- m * psi_m + (1 - m) * psi
template <typename T>
void momentum_update(ParamSet<T>& target, const ParamSet<T>& online, double m) {
  target.check_same_layout(online, "momentum_update");
  if (!(m >= 0.0 && m <= 1.0)) throw nn::ConfigError("momentum coefficient must lie in [0, 1]");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target.at(i).values;
    const auto& o = online.at(i).values;
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<T>(m * t[j] + (1.0 - m) * o[j]);
  }
}

template <typename T>
std::vector<T> mixup_features(std::span<const T> a, std::span<const T> b, T lambda) {
  if (a.size() != b.size()) throw nn::ConfigError("mixup_features: shape mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (T{1} - lambda) * b[i];
  return out;
}

/// Mean squared error; optionally writes dL/ddecoded scaled by `scale`.
template <typename T>
T reconstruction_loss(std::span<const T> decoded, std::span<const T> target, std::span<T> grad = {}, T scale = T{1}) {
  if (decoded.size() != target.size() || decoded.empty()) throw nn::ConfigError("reconstruction_loss: shape mismatch");
  const T n = static_cast<T>(decoded.size());
  T s{0};
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const T d = decoded[i] - target[i];
    s += d * d;
    if (!grad.empty()) grad[i] = scale * T{2} * d / n;
  }
  return s / n;
}

inline constexpr double kNormEps = 1e-12;

/// q = u / |u|; features with |u| < eps map to q = 0 and pass no gradient. Returns |u|.
template <typename T>
T normalize(std::span<const T> u, std::span<T> q) {
  T n2{0};
  for (T v : u) n2 += v * v;
  const T norm = std::sqrt(n2);
  if (!std::isfinite(norm)) throw nn::TrainingError("contrastive: non-finite feature");
  for (std::size_t i = 0; i < u.size(); ++i) q[i] = norm < T(kNormEps) ? T{0} : u[i] / norm;
  return norm;
}

/// dL/du from dL/dq for q = u / |u|.
template <typename T>
void normalize_backward(std::span<const T> q, T norm, std::span<const T> dq, std::span<T> du) {
  if (norm < T(kNormEps)) {
    std::fill(du.begin(), du.end(), T{0});
    return;
  }
  T dot{0};
  for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * dq[i];
  for (std::size_t i = 0; i < q.size(); ++i) du[i] = (dq[i] - q[i] * dot) / norm;
}

/// InfoNCE for one query: -log( e^{q.k/tau} / (e^{q.k/tau} + sum_n e^{q.n/tau}) ).
/// `negatives` holds rows of length q.size(). Writes dL/dq scaled by `scale` when dq is given.
template <typename T>
T info_nce(std::span<const T> q, std::span<const T> k, std::span<const T> negatives, double tau,
           std::span<T> dq = {}, T scale = T{1}) {
  const std::size_t P = q.size();
  if (k.size() != P || negatives.size() % P != 0) throw nn::ConfigError("contrastive: feature size mismatch");
  const std::size_t N = negatives.size() / P;
  std::vector<T> logits(N + 1);
  auto dot = [&](const T* v) {
    T s{0};
    for (std::size_t i = 0; i < P; ++i) s += q[i] * v[i];
    return s / static_cast<T>(tau);
  };
  logits[0] = dot(k.data());
  for (std::size_t n = 0; n < N; ++n) logits[n + 1] = dot(negatives.data() + n * P);
  T mx = logits[0];
  for (T l : logits) mx = std::max(mx, l);
  T total{0};
  for (auto& l : logits) total += (l = std::exp(l - mx));
  const T loss = -(std::log(logits[0]) - std::log(total));
  if (!dq.empty()) {
    // dL/dl_j = p_j - [j == 0]
    const T c = scale / static_cast<T>(tau);
    for (std::size_t i = 0; i < P; ++i) dq[i] = c * (logits[0] / total - T{1}) * k[i];
    for (std::size_t n = 0; n < N; ++n) {
      const T pn = c * logits[n + 1] / total;
      const T* v = negatives.data() + n * P;
      for (std::size_t i = 0; i < P; ++i) dq[i] += pn * v[i];
    }
  }
  return loss;
}

/// Batch mean of info_nce over B query/key rows. The key rows are treated as constants.
template <typename T>
T contrastive_loss(std::span<const T> q, std::span<const T> k, std::span<const T> negatives, int P, double tau,
                   std::span<T> dq = {}) {
  if (P <= 0 || q.size() != k.size() || q.size() % P != 0 || q.empty())
    throw nn::ConfigError("contrastive: batch shape mismatch");
  const std::size_t B = q.size() / P;
  for (const auto rows : {q, k})
    for (std::size_t b = 0; b < B; ++b) {
      T n2{0};
      for (int i = 0; i < P; ++i) n2 += rows[b * P + i] * rows[b * P + i];
      if (!(n2 > T{0})) throw nn::TrainingError("contrastive: zero-norm feature in row " + std::to_string(b));
    }
  T s{0};
  for (std::size_t b = 0; b < B; ++b)
    s += info_nce<T>(q.subspan(b * P, P), k.subspan(b * P, P), negatives, tau,
                     dq.empty() ? std::span<T>() : dq.subspan(b * P, P), T{1} / static_cast<T>(B));
  return s / static_cast<T>(B);
}

/// Projection head M -> P: w [P, M], b [P].
template <typename T>
ParamSet<T> make_projection_params(int embed_dim, int proj_dim) {
  if (proj_dim <= 0) throw nn::ConfigError("projection dimension must be positive");
  ParamSet<T> p;
  p.add("w", {static_cast<std::size_t>(proj_dim), static_cast<std::size_t>(embed_dim)});
  p.add("b", {static_cast<std::size_t>(proj_dim)});
  return p;
}

/// Trainable networks plus their exponential-moving-average copies.
template <typename T>
struct SslParams {
  ParamSet<T> encoder, projection, decoder;
  ParamSet<T> encoder_m, projection_m;

  template <typename U>
  SslParams<U> cast() const {
    return {encoder.template cast<U>(), projection.template cast<U>(), decoder.template cast<U>(),
            encoder_m.template cast<U>(), projection_m.template cast<U>()};
  }
};

template <typename T>
struct SslGrads {
  ParamSet<T> encoder, projection, decoder;

  static SslGrads zeros_like(const SslParams<T>& p) {
    return {p.encoder.zeros_like(), p.projection.zeros_like(), p.decoder.zeros_like()};
  }
};

/// One prepared batch: two views per instance, their reconstruction targets and transform contexts.
template <typename T>
struct SslBatch {
  int size = 0;
  std::vector<T> view1, view2, rec1, rec2;  // size x 3072
  std::vector<T> t1, t2;                    // size x 6
  T lambda{0.5};                            // crossmodel mixup weight
};

/// Per-term weights; the default is L_c + lambda_rec * (L_online + L_momentum + L_mixed).
struct SslLossWeights {
  double contrastive = 1.0;
  double rec_online = 1.0;
  double rec_momentum = 1.0;
  double rec_mixed = 1.0;

  static SslLossWeights with_lambda_rec(double lambda_rec) { return {1.0, lambda_rec, lambda_rec, lambda_rec}; }
};

template <typename T>
struct SslLosses {
  T contrastive{0}, rec_online{0}, rec_momentum{0}, rec_mixed{0}, total{0};
};

/// Batch-mean SSL objective. Every term is per-instance given the fixed queue, so instances are
/// processed one at a time and the encoder backward runs right after each forward.
/// Gradients (if requested) are accumulated into `grads`; momentum keys are appended to `keys`.
template <typename T>
SslLosses<T> ssl_objective(const nn::EncoderNet& enc, const nn::DecoderNet& dec, const SslParams<T>& p,
                           const SslBatch<T>& batch, std::span<const T> negatives, double tau,
                           const SslLossWeights& w, SslGrads<T>* grads, std::vector<T>* keys) {
  const int B = batch.size;
  if (B < 1) throw nn::ConfigError("ssl: empty batch");
  const int M = enc.embed_dim();
  const int P = static_cast<int>(p.projection.at(1).numel());
  const int D = enc.input_size();
  const int R = nn::DecoderNet::kOutSize;
  const int C = nn::kContextDim;
  const T lam = batch.lambda;
  const T invB = T{1} / static_cast<T>(B);

  nn::EncoderTrace<T> trace1, trace2;
  typename nn::DecoderNet::Cache<T> cache;
  std::vector<T> u(P), q(P), kraw(P), k(P), dq(P), du(P), dec_out(R), dout(R), dh1(M), dh_scratch(M), dhm(M);
  std::vector<T> target(R), tm(C);
  SslLosses<T> out;

  for (int b = 0; b < B; ++b) {
    enc.forward<T>(p.encoder, std::span<const T>(batch.view1).subspan(b * D, D), 1, trace1);
    enc.forward<T>(p.encoder_m, std::span<const T>(batch.view2).subspan(b * D, D), 1, trace2);
    const std::span<const T> h1 = trace1.output(), h2 = trace2.output();
    for (T v : h1)
      if (!std::isfinite(v)) throw nn::TrainingError("ssl: non-finite embedding");
    std::fill(dh1.begin(), dh1.end(), T{0});

    // contrastive: online query vs momentum key
    nn::affine_forward(M, P, 1, p.projection.at(0).data(), p.projection.at(1).data(), h1.data(), u.data());
    const T unorm = normalize<T>(u, q);
    nn::affine_forward(M, P, 1, p.projection_m.at(0).data(), p.projection_m.at(1).data(), h2.data(), kraw.data());
    normalize<T>(kraw, k);
    if (keys) keys->insert(keys->end(), k.begin(), k.end());
    const T lc = info_nce<T>(q, k, negatives, tau, grads ? std::span<T>(dq) : std::span<T>(),
                             static_cast<T>(w.contrastive) * invB);
    out.contrastive += lc * invB;
    if (grads) {
      normalize_backward<T>(q, unorm, dq, du);
      nn::affine_backward(M, P, 1, p.projection.at(0).data(), h1.data(), du.data(), grads->projection.at(0).data(),
                          grads->projection.at(1).data(), dh1.data());
    }

    auto branch = [&](std::span<const T> h, std::span<const T> t, std::span<const T> tgt, double weight,
                      std::span<T> h_grad) {
      dec.forward<T>(p.decoder, h, t, cache, dec_out);
      const T l = reconstruction_loss<T>(dec_out, tgt, grads ? std::span<T>(dout) : std::span<T>(),
                                         static_cast<T>(weight) * invB);
      if (grads) dec.backward<T>(p.decoder, cache, dout, grads->decoder, h_grad);
      return l;
    };
    const auto rec1 = std::span<const T>(batch.rec1).subspan(b * R, R);
    const auto rec2 = std::span<const T>(batch.rec2).subspan(b * R, R);
    const auto t1 = std::span<const T>(batch.t1).subspan(b * C, C);
    const auto t2 = std::span<const T>(batch.t2).subspan(b * C, C);

    out.rec_online += branch(h1, t1, rec1, w.rec_online, dh1) * invB;
    // the momentum encoder only trains the decoder
    std::fill(dh_scratch.begin(), dh_scratch.end(), T{0});
    out.rec_momentum += branch(h2, t2, rec2, w.rec_momentum, dh_scratch) * invB;

    const auto hm = mixup_features<T>(h1, h2, lam);
    for (int i = 0; i < C; ++i) tm[i] = lam * t1[i] + (T{1} - lam) * t2[i];
    for (int i = 0; i < R; ++i) target[i] = lam * rec1[i] + (T{1} - lam) * rec2[i];
    std::fill(dhm.begin(), dhm.end(), T{0});
    out.rec_mixed += branch(hm, tm, target, w.rec_mixed, dhm) * invB;

    if (grads) {
      for (int i = 0; i < M; ++i) dh1[i] += lam * dhm[i];
      enc.backward<T>(p.encoder, trace1, dh1, grads->encoder);
    }
  }
  out.total = static_cast<T>(w.contrastive) * out.contrastive + static_cast<T>(w.rec_online) * out.rec_online +
              static_cast<T>(w.rec_momentum) * out.rec_momentum + static_cast<T>(w.rec_mixed) * out.rec_mixed;
  if (!std::isfinite(out.total)) throw nn::TrainingError("ssl: non-finite loss");
  return out;
}

}  // namespace patchmil::ssl
