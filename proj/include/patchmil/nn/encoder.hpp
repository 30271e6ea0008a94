#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "patchmil/nn/layers.hpp"
#include "patchmil/nn/tensor.hpp"

namespace patchmil::nn {

enum class EncoderArch { lenet5, vggs };

std::string to_string(EncoderArch arch);
EncoderArch parse_encoder_arch(const std::string& name);

struct EncoderConfig {
  EncoderArch arch = EncoderArch::lenet5;
  int embed_dim = 128;
  int in_channels = 3;
  int in_side = 32;
};

/// One stage of the sequential encoder. Feature maps are (c, h, w); affine stages use h = w = 1.
struct EncoderLayer {
  enum class Kind { conv, affine, tanh, relu, avgpool, maxpool };
  Kind kind;
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kernel = 0;
  int pad = 0;
  int weight = -1;  // index into the encoder ParamSet
  int bias = -1;

  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * out_h * out_w; }
  ConvShape conv_shape() const { return {in_c, in_h, in_w, out_c, kernel, pad}; }
};

/// Activations of one batched forward pass. acts[i] holds the n instance-major inputs of layer i;
/// acts.back() holds the n embeddings.
template <typename T>
struct EncoderTrace {
  int batch = 0;
  bool replicated_input = false;
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<T>> cols;  // unrolled conv inputs
  std::vector<std::vector<int>> argmax;
  std::span<const T> output() const { return acts.back(); }
  std::span<const T> output(int i) const {
    const std::size_t m = acts.back().size() / batch;
    return std::span<const T>(acts.back()).subspan(i * m, m);
  }
};

/// Architecture of the instance feature extractor f_psi. Parameters live in a separate ParamSet.
class EncoderNet {
 public:
  explicit EncoderNet(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  int input_size() const { return config_.in_channels * config_.in_side * config_.in_side; }
  int embed_dim() const { return config_.embed_dim; }

  /// Parameter set with the right names/shapes, all zero.
  template <typename T>
  ParamSet<T> make_params() const {
    ParamSet<T> p;
    for (std::size_t i = 0; i < names_.size(); ++i) p.add(names_[i], shapes_[i]);
    return p;
  }

  /// Kaiming-uniform fan-in weights, zero biases.
  template <typename T, typename Rng>
  ParamSet<T> init_params(Rng& rng) const {
    ParamSet<T> p = make_params<T>();
    for (const auto& l : layers_) {
      if (l.weight < 0) continue;
      const int fan_in = l.kind == EncoderLayer::Kind::conv ? l.in_c * l.kernel * l.kernel : l.in_size();
      kaiming_uniform(p.at(l.weight), fan_in, rng);
    }
    return p;
  }

  /// Throws ConfigError when the parameter set does not match this architecture.
  template <typename T>
  void check_params(const ParamSet<T>& p) const {
    if (p.size() != names_.size())
      throw ConfigError("encoder parameters: expected " + std::to_string(names_.size()) + " tensors");
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (p.name(i) != names_[i] || p.at(i).shape != shapes_[i])
        throw ConfigError("encoder parameters: mismatch at '" + names_[i] + "'");
  }

  /// Embeds `n` instances stored back to back in `inputs`.
  template <typename T>
  void forward(const ParamSet<T>& p, std::span<const T> inputs, int n, EncoderTrace<T>& trace) const {
    if (n < 1 || inputs.size() != static_cast<std::size_t>(n) * input_size())
      throw ConfigError("encoder input: expected " + std::to_string(input_size()) + " values per instance");
    const std::size_t L = layers_.size();
    trace.batch = n;
    trace.acts.resize(L + 1);
    trace.cols.resize(L);
    trace.argmax.resize(L);
    trace.acts[0].assign(inputs.begin(), inputs.end());
    trace.replicated_input = false;
    if (layers_.front().kind == EncoderLayer::Kind::conv && config_.in_channels > 1) {
      trace.replicated_input = true;
      for (int i = 0; i < n && trace.replicated_input; ++i)
        trace.replicated_input = channels_identical(layers_.front().conv_shape(), inputs.data() + i * input_size());
    }
    thread_local std::vector<T> tmp, scratch;
    for (std::size_t i = 0; i < L; ++i) {
      const auto& l = layers_[i];
      const T* in = trace.acts[i].data();
      auto& out = trace.acts[i + 1];
      out.resize(static_cast<std::size_t>(l.out_size()) * n);
      const int count = l.out_size() * n;
      switch (l.kind) {
        case EncoderLayer::Kind::conv:
          if (i == 0 && trace.replicated_input)
            conv_forward_replicated(l.conv_shape(), n, p.at(l.weight).data(), p.at(l.bias).data(), in, out.data(),
                                    trace.cols[i], tmp, scratch);
          else
            conv_forward(l.conv_shape(), n, p.at(l.weight).data(), p.at(l.bias).data(), in, out.data(),
                         trace.cols[i], tmp);
          break;
        case EncoderLayer::Kind::affine:
          affine_forward(l.in_size(), l.out_size(), n, p.at(l.weight).data(), p.at(l.bias).data(), in, out.data());
          break;
        case EncoderLayer::Kind::tanh:
          VecMap<T>(out.data(), count) = ConstVecMap<T>(in, count).array().tanh();
          break;
        case EncoderLayer::Kind::relu:
          for (int j = 0; j < count; ++j) out[j] = in[j] > T{0} ? in[j] : T{0};
          break;
        case EncoderLayer::Kind::avgpool:
          avgpool_forward(l.in_c * n, l.in_h, l.in_w, in, out.data());
          break;
        case EncoderLayer::Kind::maxpool:
          maxpool_forward(l.in_c * n, l.in_h, l.in_w, in, out.data(), trace.argmax[i]);
          break;
      }
    }
  }

  /// Accumulates dL/dparams into grads given dL/dembeddings (n x embed_dim, instance-major).
  template <typename T>
  void backward(const ParamSet<T>& p, const EncoderTrace<T>& trace, std::span<const T> grad_out,
                ParamSet<T>& grads) const {
    const int n = trace.batch;
    if (grad_out.size() != static_cast<std::size_t>(n) * embed_dim())
      throw ConfigError("encoder backward: gradient size mismatch");
    thread_local std::vector<T> tmp, scratch, g_cur, g_prev;
    g_cur.assign(grad_out.begin(), grad_out.end());
    for (std::size_t ii = layers_.size(); ii-- > 0;) {
      const auto& l = layers_[ii];
      const T* in = trace.acts[ii].data();
      const T* out = trace.acts[ii + 1].data();
      const bool need_input_grad = ii > 0;
      const int count = l.in_size() * n;
      g_prev.resize(count);
      switch (l.kind) {
        case EncoderLayer::Kind::conv:
          if (ii == 0 && trace.replicated_input)
            conv_backward_replicated(l.conv_shape(), n, trace.cols[ii], g_cur.data(), grads.at(l.weight).data(),
                                     grads.at(l.bias).data(), tmp, scratch);
          else
            conv_backward(l.conv_shape(), n, p.at(l.weight).data(), trace.cols[ii], g_cur.data(),
                          grads.at(l.weight).data(), grads.at(l.bias).data(),
                          need_input_grad ? g_prev.data() : nullptr, tmp, scratch);
          break;
        case EncoderLayer::Kind::affine:
          affine_backward(l.in_size(), l.out_size(), n, p.at(l.weight).data(), in, g_cur.data(),
                          grads.at(l.weight).data(), grads.at(l.bias).data(),
                          need_input_grad ? g_prev.data() : nullptr);
          break;
        case EncoderLayer::Kind::tanh:
          for (int j = 0; j < count; ++j) g_prev[j] = g_cur[j] * (T{1} - out[j] * out[j]);
          break;
        case EncoderLayer::Kind::relu:
          for (int j = 0; j < count; ++j) g_prev[j] = in[j] > T{0} ? g_cur[j] : T{0};
          break;
        case EncoderLayer::Kind::avgpool:
          avgpool_backward(l.in_c * n, l.in_h, l.in_w, g_cur.data(), g_prev.data());
          break;
        case EncoderLayer::Kind::maxpool:
          maxpool_backward(count, std::span<const int>(trace.argmax[ii]), g_cur.data(), g_prev.data());
          break;
      }
      if (!need_input_grad) break;
      std::swap(g_cur, g_prev);
    }
  }

  /// Convenience single-instance embedding.
  template <typename T>
  std::vector<T> encode(const ParamSet<T>& p, std::span<const T> input) const {
    EncoderTrace<T> trace;
    forward(p, input, 1, trace);
    return trace.acts.back();
  }

 private:
  void add_conv(const std::string& name, int out_c, int kernel, int pad);
  void add_affine(const std::string& name, int out);
  void add_simple(EncoderLayer::Kind kind);
  void add_pool(EncoderLayer::Kind kind);

  EncoderConfig config_;
  std::vector<EncoderLayer> layers_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> shapes_;
  int c_, h_, w_;  // running feature-map shape during construction
};

/// Recovers the encoder configuration from a parameter set (used when loading checkpoints).
template <typename T>
EncoderConfig infer_encoder_config(const ParamSet<T>& p) {
  EncoderConfig cfg;
  if (p.contains("conv4.w")) {
    cfg.arch = EncoderArch::vggs;
    cfg.embed_dim = static_cast<int>(p["fc.w"].shape.at(0));
  } else if (p.contains("fc2.w")) {
    cfg.arch = EncoderArch::lenet5;
    cfg.embed_dim = static_cast<int>(p["fc2.w"].shape.at(0));
  } else {
    throw ConfigError("encoder parameters: unrecognized architecture");
  }
  return cfg;
}

}  // namespace patchmil::nn
