#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "patchmil/nn/tensor.hpp"

// Dense primitives on channel-major (C,H,W) feature maps, single instance at a time.
// Backward functions accumulate into weight/bias gradients and overwrite the input gradient.

namespace patchmil::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Sequential sum. Eigen's vectorized reductions peel by pointer alignment, which would make
/// results depend on where the buffer happens to be allocated.
template <typename T>
T serial_sum(const T* p, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

struct ConvShape {
  int in_c, in_h, in_w;
  int out_c;
  int kernel;
  int pad;
  int out_h() const { return in_h + 2 * pad - kernel + 1; }
  int out_w() const { return in_w + 2 * pad - kernel + 1; }
  int patch_len() const { return in_c * kernel * kernel; }
};

/// Unrolls one (c,h,w) input into rows of `col`; row r starts at col + r*ld. Columns are output pixels.
template <typename T>
void im2col(const ConvShape& s, const T* in, T* col, std::size_t ld) {
  const int oh = s.out_h(), ow = s.out_w();
  for (int c = 0; c < s.in_c; ++c)
    for (int ky = 0; ky < s.kernel; ++ky)
      for (int kx = 0; kx < s.kernel; ++kx) {
        T* dst = col + static_cast<std::size_t>((c * s.kernel + ky) * s.kernel + kx) * ld;
        for (int y = 0; y < oh; ++y) {
          const int iy = y + ky - s.pad;
          T* row = dst + y * ow;
          if (iy < 0 || iy >= s.in_h) {
            std::fill(row, row + ow, T{0});
            continue;
          }
          const T* src = in + (c * s.in_h + iy) * s.in_w;
          if (s.pad == 0) {
            std::copy_n(src + kx, ow, row);
            continue;
          }
          for (int x = 0; x < ow; ++x) {
            const int ix = x + kx - s.pad;
            row[x] = (ix >= 0 && ix < s.in_w) ? src[ix] : T{0};
          }
        }
      }
}

/// Adjoint of im2col: overwrites in_grad with the scattered column sums.
template <typename T>
void col2im(const ConvShape& s, const T* col, std::size_t ld, T* in_grad) {
  const int oh = s.out_h(), ow = s.out_w();
  std::fill(in_grad, in_grad + s.in_c * s.in_h * s.in_w, T{0});
  for (int c = 0; c < s.in_c; ++c)
    for (int ky = 0; ky < s.kernel; ++ky)
      for (int kx = 0; kx < s.kernel; ++kx) {
        const T* src = col + static_cast<std::size_t>((c * s.kernel + ky) * s.kernel + kx) * ld;
        for (int y = 0; y < oh; ++y) {
          const int iy = y + ky - s.pad;
          if (iy < 0 || iy >= s.in_h) continue;
          T* dst = in_grad + (c * s.in_h + iy) * s.in_w;
          const T* row = src + y * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x + kx - s.pad;
            if (ix >= 0 && ix < s.in_w) dst[ix] += row[x];
          }
        }
      }
}

/// Batched convolution. `in` holds n instance-major (c,h,w) maps; `col` keeps the unrolled input
/// ([patch_len, n*oh*ow]) for the backward pass. W is laid out [out_c, in_c, k, k].
template <typename T>
void conv_forward(const ConvShape& s, int n, const T* w, const T* b, const T* in, T* out, std::vector<T>& col,
                  std::vector<T>& tmp) {
  const std::size_t hw = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t cols = hw * n;
  const std::size_t in_size = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
  col.resize(static_cast<std::size_t>(s.patch_len()) * cols);
  for (int i = 0; i < n; ++i) im2col(s, in + i * in_size, col.data() + i * hw, cols);
  tmp.resize(static_cast<std::size_t>(s.out_c) * cols);
  // Per-instance products keep each output independent of the batch size.
  for (int i = 0; i < n; ++i)
    StridedMap<T>(tmp.data() + i * hw, s.out_c, hw, Eigen::OuterStride<>(cols)).noalias() =
        ConstMatMap<T>(w, s.out_c, s.patch_len()) *
        ConstStridedMap<T>(col.data() + i * hw, s.patch_len(), hw, Eigen::OuterStride<>(cols));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < s.out_c; ++c) {
      const T* src = tmp.data() + c * cols + i * hw;
      T* dst = out + (static_cast<std::size_t>(i) * s.out_c + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] = src[j] + b[c];
    }
}

/// Uses the `col` produced by conv_forward. Pass in_grad = nullptr to skip the input gradient.
template <typename T>
void conv_backward(const ConvShape& s, int n, const T* w, const std::vector<T>& col, const T* out_grad, T* w_grad,
                   T* b_grad, T* in_grad, std::vector<T>& tmp, std::vector<T>& dcol) {
  const std::size_t hw = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t cols = hw * n;
  tmp.resize(static_cast<std::size_t>(s.out_c) * cols);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < s.out_c; ++c)
      std::copy_n(out_grad + (static_cast<std::size_t>(i) * s.out_c + c) * hw, hw, tmp.data() + c * cols + i * hw);
  ConstMatMap<T> go(tmp.data(), s.out_c, cols);
  MatMap<T>(w_grad, s.out_c, s.patch_len()).noalias() +=
      go * ConstMatMap<T>(col.data(), s.patch_len(), cols).transpose();
  for (int c = 0; c < s.out_c; ++c) b_grad[c] += serial_sum(tmp.data() + c * cols, cols);
  if (in_grad == nullptr) return;
  dcol.resize(static_cast<std::size_t>(s.patch_len()) * cols);
  MatMap<T>(dcol.data(), s.patch_len(), cols).noalias() = ConstMatMap<T>(w, s.out_c, s.patch_len()).transpose() * go;
  const std::size_t in_size = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
  for (int i = 0; i < n; ++i) col2im(s, dcol.data() + i * hw, cols, in_grad + i * in_size);
}

/// True when every input channel holds the same plane (grayscale replicated to RGB).
template <typename T>
bool channels_identical(const ConvShape& s, const T* in) {
  const int plane = s.in_h * s.in_w;
  for (int c = 1; c < s.in_c; ++c)
    if (!std::equal(in, in + plane, in + c * plane)) return false;
  return true;
}

/// Single-plane view of a convolution whose input channels are identical.
inline ConvShape replicated_shape(const ConvShape& s) { return {1, s.in_h, s.in_w, s.out_c, s.kernel, s.pad}; }

// With identical input channels, sum_c W[o,c] * x == (sum_c W[o,c]) * x, so the convolution runs on one
// plane. `in` still holds full (c,h,w) maps; only the first plane of each is read.
template <typename T>
void conv_forward_replicated(const ConvShape& s, int n, const T* w, const T* b, const T* in, T* out,
                             std::vector<T>& col, std::vector<T>& tmp, std::vector<T>& wsum) {
  const ConvShape one = replicated_shape(s);
  const int kk = s.kernel * s.kernel;
  wsum.assign(static_cast<std::size_t>(s.out_c) * kk, T{0});
  for (int o = 0; o < s.out_c; ++o)
    for (int c = 0; c < s.in_c; ++c)
      for (int j = 0; j < kk; ++j) wsum[o * kk + j] += w[(o * s.in_c + c) * kk + j];
  const std::size_t hw = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t cols = hw * n;
  const std::size_t in_size = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
  col.resize(static_cast<std::size_t>(kk) * cols);
  for (int i = 0; i < n; ++i) im2col(one, in + i * in_size, col.data() + i * hw, cols);
  tmp.resize(static_cast<std::size_t>(s.out_c) * cols);
  for (int i = 0; i < n; ++i)
    StridedMap<T>(tmp.data() + i * hw, s.out_c, hw, Eigen::OuterStride<>(cols)).noalias() =
        ConstMatMap<T>(wsum.data(), s.out_c, kk) *
        ConstStridedMap<T>(col.data() + i * hw, kk, hw, Eigen::OuterStride<>(cols));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < s.out_c; ++c) {
      const T* src = tmp.data() + c * cols + i * hw;
      T* dst = out + (static_cast<std::size_t>(i) * s.out_c + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] = src[j] + b[c];
    }
}

/// The weight gradient is shared by all replicated channels; no input gradient is produced.
template <typename T>
void conv_backward_replicated(const ConvShape& s, int n, const std::vector<T>& col, const T* out_grad, T* w_grad,
                              T* b_grad, std::vector<T>& tmp, std::vector<T>& wsum_grad) {
  const int kk = s.kernel * s.kernel;
  const std::size_t hw = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t cols = hw * n;
  tmp.resize(static_cast<std::size_t>(s.out_c) * cols);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < s.out_c; ++c)
      std::copy_n(out_grad + (static_cast<std::size_t>(i) * s.out_c + c) * hw, hw, tmp.data() + c * cols + i * hw);
  ConstMatMap<T> go(tmp.data(), s.out_c, cols);
  wsum_grad.resize(static_cast<std::size_t>(s.out_c) * kk);
  MatMap<T>(wsum_grad.data(), s.out_c, kk).noalias() = go * ConstMatMap<T>(col.data(), kk, cols).transpose();
  for (int o = 0; o < s.out_c; ++o) {
    b_grad[o] += serial_sum(tmp.data() + o * cols, cols);
    for (int c = 0; c < s.in_c; ++c)
      for (int j = 0; j < kk; ++j) w_grad[(o * s.in_c + c) * kk + j] += wsum_grad[o * kk + j];
  }
}

/// Batched y_i = W x_i + b for n instance-major rows; W laid out [out, in].
template <typename T>
void affine_forward(int in, int out, int n, const T* w, const T* b, const T* x, T* y) {
  // One product per instance: a batched GEMM would sum in a size-dependent order.
  for (int i = 0; i < n; ++i)
    VecMap<T>(y + static_cast<std::size_t>(i) * out, out).noalias() =
        ConstMatMap<T>(w, out, in) * ConstVecMap<T>(x + static_cast<std::size_t>(i) * in, in) + ConstVecMap<T>(b, out);
}

template <typename T>
void affine_backward(int in, int out, int n, const T* w, const T* x, const T* y_grad, T* w_grad, T* b_grad,
                     T* x_grad) {
  ConstMatMap<T> gy(y_grad, n, out);
  MatMap<T>(w_grad, out, in).noalias() += gy.transpose() * ConstMatMap<T>(x, n, in);
  for (int o = 0; o < out; ++o) {
    T acc{0};
    for (int i = 0; i < n; ++i) acc += y_grad[static_cast<std::size_t>(i) * out + o];
    b_grad[o] += acc;
  }
  if (x_grad != nullptr) MatMap<T>(x_grad, n, in).noalias() = gy * ConstMatMap<T>(w, out, in);
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// 2x2 stride-2 average pooling on (c,h,w); h and w must be even.
template <typename T>
void avgpool_forward(int c, int h, int w, const T* in, T* out) {
  const int oh = h / 2, ow = w / 2;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const T* p = in + (ch * h + 2 * y) * w + 2 * x;
        out[(ch * oh + y) * ow + x] = T(0.25) * (p[0] + p[1] + p[w] + p[w + 1]);
      }
}

template <typename T>
void avgpool_backward(int c, int h, int w, const T* out_grad, T* in_grad) {
  const int oh = h / 2, ow = w / 2;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const T g = T(0.25) * out_grad[(ch * oh + y) * ow + x];
        T* p = in_grad + (ch * h + 2 * y) * w + 2 * x;
        p[0] = g;
        p[1] = g;
        p[w] = g;
        p[w + 1] = g;
      }
}

/// 2x2 stride-2 max pooling; records the winning flat input index per output.
template <typename T>
void maxpool_forward(int c, int h, int w, const T* in, T* out, std::vector<int>& argmax) {
  const int oh = h / 2, ow = w / 2;
  argmax.resize(static_cast<std::size_t>(c) * oh * ow);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const int base = (ch * h + 2 * y) * w + 2 * x;
        int best = base;
        for (int off : {1, w, w + 1})
          if (in[base + off] > in[best]) best = base + off;
        const int o = (ch * oh + y) * ow + x;
        out[o] = in[best];
        argmax[o] = best;
      }
}

template <typename T>
void maxpool_backward(int in_size, std::span<const int> argmax, const T* out_grad, T* in_grad) {
  std::fill(in_grad, in_grad + in_size, T{0});
  for (std::size_t o = 0; o < argmax.size(); ++o) in_grad[argmax[o]] += out_grad[o];
}

/// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T, typename Rng>
void kaiming_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values) v = static_cast<T>(dist(rng));
}

}  // namespace patchmil::nn
