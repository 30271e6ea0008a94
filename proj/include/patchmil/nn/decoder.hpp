#pragma once

#include <array>
#include <span>
#include <vector>

#include "patchmil/nn/layers.hpp"
#include "patchmil/nn/tensor.hpp"

namespace patchmil::nn {

inline constexpr int kContextDim = 6;

/// h_cond = h * sigmoid(A t + c): per-channel gate driven by the target transformation t.
/// A is [m, 6] row-major, c is [m]. Writes the gate into `gate` for the backward pass.
template <typename T>
void condition_on_transform(std::span<const T> h, std::span<const T> t, const T* A, const T* c, std::span<T> h_cond,
                            std::span<T> gate) {
  const std::size_t m = h.size();
  for (std::size_t i = 0; i < m; ++i) {
    T pre = c[i];
    for (int j = 0; j < kContextDim; ++j) pre += A[i * kContextDim + j] * t[j];
    gate[i] = sigmoid(pre);
    h_cond[i] = h[i] * gate[i];
  }
}

/// Backward of condition_on_transform. Accumulates into A_grad/c_grad and adds into h_grad.
template <typename T>
void condition_backward(std::span<const T> h, std::span<const T> t, std::span<const T> gate,
                        std::span<const T> cond_grad, T* A_grad, T* c_grad, std::span<T> h_grad) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    h_grad[i] += cond_grad[i] * gate[i];
    const T dpre = cond_grad[i] * h[i] * gate[i] * (T{1} - gate[i]);
    c_grad[i] += dpre;
    for (int j = 0; j < kContextDim; ++j) A_grad[i * kContextDim + j] += dpre * t[j];
  }
}

/// Reconstruction head: transform-conditioned gate, affine M -> 16x8x8, tanh, then a
/// stride-4 4x4 transposed convolution to 3x32x32. Output values are unconstrained.
class DecoderNet {
 public:
  static constexpr int kHiddenC = 16;
  static constexpr int kHiddenSide = 8;
  static constexpr int kFactor = 4;
  static constexpr int kOutC = 3;
  static constexpr int kOutSide = kHiddenSide * kFactor;
  static constexpr int kHidden = kHiddenC * kHiddenSide * kHiddenSide;
  static constexpr int kOutSize = kOutC * kOutSide * kOutSide;

  explicit DecoderNet(int embed_dim) : m_(embed_dim) {
    if (m_ <= 0) throw ConfigError("decoder: embed_dim must be positive");
  }
  int embed_dim() const { return m_; }

  template <typename T>
  ParamSet<T> make_params() const {
    ParamSet<T> p;
    p.add("cond.A", {static_cast<std::size_t>(m_), kContextDim});
    p.add("cond.c", {static_cast<std::size_t>(m_)});
    p.add("fc.w", {kHidden, static_cast<std::size_t>(m_)});
    p.add("fc.b", {kHidden});
    p.add("tconv.w", {kHiddenC, kOutC, kFactor, kFactor});
    p.add("tconv.b", {kOutC});
    return p;
  }

  template <typename T, typename Rng>
  ParamSet<T> init_params(Rng& rng) const {
    ParamSet<T> p = make_params<T>();
    kaiming_uniform(p["cond.A"], kContextDim, rng);
    kaiming_uniform(p["fc.w"], m_, rng);
    kaiming_uniform(p["tconv.w"], kHiddenC, rng);
    return p;
  }

  template <typename T>
  struct Cache {
    std::vector<T> h, t, gate, cond, hidden;  // hidden holds tanh outputs
  };

  /// Decodes one embedding under context t into a 3x32x32 patch.
  template <typename T>
  void forward(const ParamSet<T>& p, std::span<const T> h, std::span<const T> t, Cache<T>& cache,
               std::span<T> out) const {
    if (static_cast<int>(h.size()) != m_ || t.size() != kContextDim || out.size() != kOutSize)
      throw ConfigError("decoder: shape mismatch");
    cache.h.assign(h.begin(), h.end());
    cache.t.assign(t.begin(), t.end());
    cache.gate.resize(m_);
    cache.cond.resize(m_);
    condition_on_transform<T>(h, t, p.at(0).data(), p.at(1).data(), cache.cond, cache.gate);
    cache.hidden.resize(kHidden);
    affine_forward(m_, kHidden, 1, p.at(2).data(), p.at(3).data(), cache.cond.data(), cache.hidden.data());
    VecMap<T>(cache.hidden.data(), kHidden) = VecMap<T>(cache.hidden.data(), kHidden).array().tanh();
    const T* w = p.at(4).data();
    const T* b = p.at(5).data();
    for (int o = 0; o < kOutC; ++o) {
      T* plane = out.data() + o * kOutSide * kOutSide;
      std::fill(plane, plane + kOutSide * kOutSide, b[o]);
    }
    for (int i = 0; i < kHiddenC; ++i)
      for (int y = 0; y < kHiddenSide; ++y)
        for (int x = 0; x < kHiddenSide; ++x) {
          const T v = cache.hidden[(i * kHiddenSide + y) * kHiddenSide + x];
          for (int o = 0; o < kOutC; ++o)
            for (int ky = 0; ky < kFactor; ++ky) {
              T* row = out.data() + (o * kOutSide + kFactor * y + ky) * kOutSide + kFactor * x;
              const T* wk = w + ((i * kOutC + o) * kFactor + ky) * kFactor;
              for (int kx = 0; kx < kFactor; ++kx) row[kx] += wk[kx] * v;
            }
        }
  }

  /// Accumulates parameter gradients and adds dL/dh into h_grad.
  template <typename T>
  void backward(const ParamSet<T>& p, const Cache<T>& cache, std::span<const T> out_grad, ParamSet<T>& grads,
                std::span<T> h_grad) const {
    std::vector<T> g_hidden(kHidden, T{0});
    const T* w = p.at(4).data();
    T* gw = grads.at(4).data();
    T* gb = grads.at(5).data();
    for (int o = 0; o < kOutC; ++o) {
      const T* plane = out_grad.data() + o * kOutSide * kOutSide;
      T s{0};
      for (int j = 0; j < kOutSide * kOutSide; ++j) s += plane[j];
      gb[o] += s;
    }
    for (int i = 0; i < kHiddenC; ++i)
      for (int y = 0; y < kHiddenSide; ++y)
        for (int x = 0; x < kHiddenSide; ++x) {
          const int hi = (i * kHiddenSide + y) * kHiddenSide + x;
          const T v = cache.hidden[hi];
          T acc{0};
          for (int o = 0; o < kOutC; ++o)
            for (int ky = 0; ky < kFactor; ++ky) {
              const T* row = out_grad.data() + (o * kOutSide + kFactor * y + ky) * kOutSide + kFactor * x;
              const int wi = ((i * kOutC + o) * kFactor + ky) * kFactor;
              for (int kx = 0; kx < kFactor; ++kx) {
                gw[wi + kx] += row[kx] * v;
                acc += row[kx] * w[wi + kx];
              }
            }
          g_hidden[hi] = acc * (T{1} - v * v);
        }
    std::vector<T> g_cond(m_);
    affine_backward(m_, kHidden, 1, p.at(2).data(), cache.cond.data(), g_hidden.data(), grads.at(2).data(),
                    grads.at(3).data(), g_cond.data());
    condition_backward<T>(cache.h, cache.t, cache.gate, g_cond, grads.at(0).data(), grads.at(1).data(), h_grad);
  }

  template <typename T>
  std::vector<T> decode(const ParamSet<T>& p, std::span<const T> h, std::span<const T> t) const {
    Cache<T> cache;
    std::vector<T> out(kOutSize);
    forward(p, h, t, cache, std::span<T>(out));
    return out;
  }

 private:
  int m_;
};

}  // namespace patchmil::nn
