#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "patchmil/dataset.hpp"
#include "patchmil/nn/encoder.hpp"
#include "patchmil/nn/optim.hpp"

// Encoder pretraining on oracle instance labels: the desk-scale stand-in for an encoder
// pretrained with full supervision elsewhere. Only this module reads instance labels for training.

namespace patchmil::supervised {

struct SupervisedConfig {
  nn::EncoderConfig encoder;
  nn::OptimConfig optim = nn::ssl_sgd_defaults();
  int epochs = 5;
  int batch_size = 64;
  int instances_per_bag = 0;  // negatives drawn per bag per epoch, 0 = all; positives always kept
  std::uint64_t seed = 0;
};

struct SupervisedEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct SupervisedResult {
  nn::ParamSet<float> encoder;
  std::vector<SupervisedEpochLog> log;
};

/// Encoder plus a linear M -> 1 head trained with class-balanced BCE on instance labels.
SupervisedResult pretrain_supervised(const SupervisedConfig& config, const BagSet& train,
                                     const std::function<void(const SupervisedEpochLog&)>& on_epoch = {});

}  // namespace patchmil::supervised
