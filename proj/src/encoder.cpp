#include "patchmil/nn/encoder.hpp"

namespace patchmil::nn {

std::string to_string(EncoderArch arch) { return arch == EncoderArch::lenet5 ? "lenet5" : "vggs"; }

EncoderArch parse_encoder_arch(const std::string& name) {
  if (name == "lenet5") return EncoderArch::lenet5;
  if (name == "vggs") return EncoderArch::vggs;
  throw ConfigError("encoder: unknown architecture '" + name + "' (expected lenet5|vggs)");
}

EncoderNet::EncoderNet(EncoderConfig config)
    : config_(config), c_(config.in_channels), h_(config.in_side), w_(config.in_side) {
  if (config_.embed_dim <= 0) throw ConfigError("embed_dim: must be positive");
  using K = EncoderLayer::Kind;
  switch (config_.arch) {
    case EncoderArch::lenet5:
      add_conv("conv1", 6, 5, 0);
      add_simple(K::tanh);
      add_pool(K::avgpool);
      add_conv("conv2", 16, 5, 0);
      add_simple(K::tanh);
      add_pool(K::avgpool);
      add_affine("fc1", 120);
      add_simple(K::tanh);
      add_affine("fc2", config_.embed_dim);
      break;
    case EncoderArch::vggs: {
      const int widths[] = {32, 64, 128, 128};
      for (int i = 0; i < 4; ++i) {
        add_conv("conv" + std::to_string(i + 1), widths[i], 3, 1);
        add_simple(K::relu);
        add_pool(K::maxpool);
      }
      add_affine("fc", config_.embed_dim);
      break;
    }
  }
}

void EncoderNet::add_conv(const std::string& name, int out_c, int kernel, int pad) {
  EncoderLayer l{EncoderLayer::Kind::conv, c_, h_, w_, out_c, h_ + 2 * pad - kernel + 1, w_ + 2 * pad - kernel + 1};
  l.kernel = kernel;
  l.pad = pad;
  l.weight = static_cast<int>(names_.size());
  names_.push_back(name + ".w");
  shapes_.push_back({static_cast<std::size_t>(out_c), static_cast<std::size_t>(c_), static_cast<std::size_t>(kernel),
                     static_cast<std::size_t>(kernel)});
  l.bias = static_cast<int>(names_.size());
  names_.push_back(name + ".b");
  shapes_.push_back({static_cast<std::size_t>(out_c)});
  layers_.push_back(l);
  c_ = l.out_c;
  h_ = l.out_h;
  w_ = l.out_w;
}

void EncoderNet::add_affine(const std::string& name, int out) {
  EncoderLayer l{EncoderLayer::Kind::affine, c_ * h_ * w_, 1, 1, out, 1, 1};
  l.weight = static_cast<int>(names_.size());
  names_.push_back(name + ".w");
  shapes_.push_back({static_cast<std::size_t>(out), static_cast<std::size_t>(l.in_c)});
  l.bias = static_cast<int>(names_.size());
  names_.push_back(name + ".b");
  shapes_.push_back({static_cast<std::size_t>(out)});
  layers_.push_back(l);
  c_ = out;
  h_ = 1;
  w_ = 1;
}

void EncoderNet::add_simple(EncoderLayer::Kind kind) {
  layers_.push_back(EncoderLayer{kind, c_, h_, w_, c_, h_, w_});
}

void EncoderNet::add_pool(EncoderLayer::Kind kind) {
  layers_.push_back(EncoderLayer{kind, c_, h_, w_, c_, h_ / 2, w_ / 2});
  h_ /= 2;
  w_ /= 2;
}

}  // namespace patchmil::nn
