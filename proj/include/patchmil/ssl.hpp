#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "patchmil/augment.hpp"
#include "patchmil/dataset.hpp"
#include "patchmil/nn/optim.hpp"
#include "patchmil/ssl_math.hpp"

namespace patchmil::ssl {

struct SslConfig {
  nn::EncoderConfig encoder;
  nn::OptimConfig optim = nn::ssl_sgd_defaults();
  int epochs = 10;
  int batch_size = 256;
  double temperature = 0.2;
  int queue_size = 4096;
  int proj_dim = 64;
  double momentum = 0.99;
  double lambda_rec = 1.0;
  int instances_per_bag = 0;  // 0 = every instance of every bag, else a fresh random subset each epoch
  bool skip_constant_tiles = false;  // leave out tiles of a single intensity (pure air)
  std::uint64_t seed = 0;
};

void validate(const SslConfig& config);

/// Fixed-capacity FIFO of unit-norm key vectors. Starts full of random unit vectors.
class FeatureQueue {
 public:
  FeatureQueue() = default;
  FeatureQueue(int capacity, int dim) : capacity_(capacity), dim_(dim), data_(static_cast<std::size_t>(capacity) * dim) {}

  void fill_random(Rng& rng);
  /// Appends rows (n x dim), evicting the oldest once full.
  void push(std::span<const float> rows);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int size() const { return count_; }
  /// Storage rows in slot order (order is irrelevant to the loss); only the first size() slots are valid
  /// until the queue has filled once.
  std::span<const float> rows() const { return std::span<const float>(data_).first(static_cast<std::size_t>(count_) * dim_); }
  /// Oldest to newest.
  std::vector<float> ordered() const;

 private:
  int capacity_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
  int head_ = 0;  // next slot to write
  int count_ = 0;
};

struct SslState {
  SslConfig config;
  SslParams<float> params;
  FeatureQueue queue;
  nn::OptimState<float> encoder_opt, projection_opt, decoder_opt;
  Rng rng;
  long steps = 0;
};

SslState init_ssl(const SslConfig& config);

/// lambda ~ Beta(1, 1) as X / (X + Y) with X, Y ~ Gamma(1, 1).
double sample_beta(Rng& rng, double a = 1.0, double b = 1.0);

/// Generates two augmented views per instance, then one SGD step on the SSL objective, the
/// momentum update of encoder and projection head, and the queue update.
SslLosses<double> ssl_step(SslState& state, std::span<const PatchInstance> instances);

struct SslEpochLog {
  int epoch = 0;
  double contrastive = 0, rec_online = 0, rec_momentum = 0, rec_mixed = 0, total = 0;
  long steps = 0;
};

struct PretrainResult {
  ParamSet<float> encoder;
  std::vector<SslEpochLog> log;
};

PretrainResult pretrain(const SslConfig& config, const BagSet& train,
                        const std::function<void(const SslEpochLog&)>& on_epoch = {});

/// MILC file holding only "encoder." tensors.
void save_encoder(const std::filesystem::path& path, const ParamSet<float>& encoder);
ParamSet<float> load_encoder(const std::filesystem::path& path);

void write_ssl_log(const std::filesystem::path& path, const std::vector<SslEpochLog>& log);

}  // namespace patchmil::ssl
