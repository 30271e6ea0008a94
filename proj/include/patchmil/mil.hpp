#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "patchmil/dataset.hpp"
#include "patchmil/mil_math.hpp"
#include "patchmil/nn/checkpoint.hpp"
#include "patchmil/nn/encoder.hpp"
#include "patchmil/nn/optim.hpp"

namespace patchmil::mil {

enum class TrainMode { transfer, finetune };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

/// Encoder f_psi, gated attention (w, V, U) and classifier g_phi.
struct MilModel {
  nn::EncoderConfig encoder_config;
  ParamSet<float> encoder;
  ParamSet<float> attention;
  ParamSet<float> classifier;
  bool encoder_frozen = false;

  /// All parameters drawn from `seed` (Kaiming-uniform weights, zero biases).
  static MilModel random(const nn::EncoderConfig& encoder_config, int attention_dim, std::uint64_t seed);
  /// Pretrained encoder with freshly initialized attention and classifier.
  static MilModel with_encoder(ParamSet<float> encoder, int attention_dim, std::uint64_t seed);

  int embed_dim() const { return encoder_config.embed_dim; }
  int attention_dim() const { return static_cast<int>(attention.at(0).numel()); }

  nn::TensorMap to_tensors() const;
  static MilModel from_tensors(const nn::TensorMap& tensors);
};

struct BagPrediction {
  double theta = 0.0;
  std::vector<double> attention;  // grid order
  int predicted = 0;              // 1 iff theta >= 0.5
};

/// Embeds every instance of a bag (identical instances are encoded once). Returns K x M.
std::vector<float> embed_bag(const nn::EncoderNet& net, const ParamSet<float>& encoder, const Bag& bag);

BagPrediction classify_embeddings(const MilModel& model, std::span<const float> H, int K);
BagPrediction classify_bag(const MilModel& model, const Bag& bag);

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

/// w_p = N / n_p, w_n = N / n_n. Zero class counts are a configuration error.
ClassWeights class_weights(std::size_t total, std::size_t positives, std::size_t negatives);

struct Metrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Precision, recall and F1 are 0 when their denominators are 0.
Metrics metrics_from_counts(long tp, long fp, long fn, long tn);

struct EvalResult {
  Metrics metrics;
  std::vector<BagPrediction> predictions;
};

EvalResult evaluate(const MilModel& model, const BagSet& bags);

struct MilConfig {
  nn::OptimConfig optim = nn::mil_adam_defaults();
  int epochs = 50;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::finetune;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  MilModel model;         // weights of the epoch with minimum validation loss
  std::vector<EpochLog> log;
  int best_epoch = 0;     // 0 when no epoch ran
  ClassWeights weights;
};

/// One bag per optimization step; class weights from the training bags. In transfer mode the
/// encoder is frozen and its embeddings are computed once.
TrainResult train_mil(const MilConfig& config, const BagSet& train, const BagSet& valid, MilModel init,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);
void write_eval_report(const std::filesystem::path& path, const std::string& split, const Metrics& m);
std::string eval_report_header();
std::string eval_report_row(const std::string& split, const Metrics& m);

}  // namespace patchmil::mil
