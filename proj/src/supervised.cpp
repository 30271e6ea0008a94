#include "patchmil/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchmil/augment.hpp"
#include "patchmil/mil_math.hpp"

namespace patchmil::supervised {

SupervisedResult pretrain_supervised(const SupervisedConfig& config, const BagSet& train,
                                     const std::function<void(const SupervisedEpochLog&)>& on_epoch) {
  if (train.empty()) throw ValidationError("supervised pretraining: training split is empty");
  if (config.batch_size < 1) throw ValidationError("supervised.batch_size must be >= 1");
  if (config.epochs < 0) throw ValidationError("supervised.epochs must be >= 0");

  Rng rng(config.seed);
  const nn::EncoderNet net(config.encoder);
  const int M = net.embed_dim();
  auto encoder = net.init_params<float>(rng);
  auto head = mil::make_classifier_params<float>(M);
  nn::kaiming_uniform(head["w"], M, rng);
  auto enc_grad = encoder.zeros_like();
  auto head_grad = head.zeros_like();
  nn::OptimState<float> enc_opt(config.optim, encoder), head_opt(config.optim, head);

  struct Ref {
    std::uint32_t bag;
    std::uint16_t tile;
    std::uint8_t label;
  };
  std::vector<int> tiles(kBagSize);
  std::iota(tiles.begin(), tiles.end(), 0);
  SupervisedResult result;
  nn::EncoderTrace<float> trace;
  std::vector<float> dh(M);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<Ref> refs;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto& labels = train.record(i).entry.instance_labels;
      if (!labels) throw ValidationError("supervised pretraining needs instance labels in the manifest");
      // Subsampling keeps every positive tile: they are rare enough that a uniform draw loses them.
      if (config.instances_per_bag > 0) std::shuffle(tiles.begin(), tiles.end(), rng);
      int negatives = 0;
      for (const int k : tiles) {
        const bool keep = (*labels)[k] == 1 || config.instances_per_bag == 0 || negatives < config.instances_per_bag;
        if (!keep) continue;
        negatives += (*labels)[k] == 0;
        refs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint16_t>(k), (*labels)[k]});
      }
    }
    std::shuffle(refs.begin(), refs.end(), rng);
    const std::size_t positives = std::count_if(refs.begin(), refs.end(), [](const Ref& r) { return r.label == 1; });
    // Class-balanced weights over this epoch's sample; a missing class simply gets no weight.
    const double n = static_cast<double>(refs.size());
    const double wp = positives ? n / (2.0 * positives) : 0.0;
    const double wn = positives < refs.size() ? n / (2.0 * (refs.size() - positives)) : 0.0;

    SupervisedEpochLog row;
    row.epoch = epoch;
    long correct = 0;
    for (std::size_t start = 0; start < refs.size(); start += config.batch_size) {
      const std::size_t end = std::min(refs.size(), start + config.batch_size);
      const float scale = 1.0f / static_cast<float>(end - start);
      enc_grad.set_zero();
      head_grad.set_zero();
      for (std::size_t r = start; r < end; ++r) {
        const auto inst = extract_instance(train.record(refs[r].bag).slice, refs[r].tile);
        net.forward<float>(encoder, inst.data, 1, trace);
        const auto h = trace.output();
        float logit = head.at(1).values[0];
        for (int m = 0; m < M; ++m) logit += head.at(0).values[m] * h[m];
        const double theta = nn::sigmoid(static_cast<double>(logit));
        const int y = refs[r].label;
        row.loss += mil::weighted_bce<double>(theta, y, wp, wn);
        correct += (theta >= 0.5) == (y == 1);
        const float g = scale * static_cast<float>(mil::weighted_bce_logit_grad<double>(theta, y, wp, wn));
        for (int m = 0; m < M; ++m) {
          head_grad.at(0).values[m] += g * h[m];
          dh[m] = g * head.at(0).values[m];
        }
        head_grad.at(1).values[0] += g;
        net.backward<float>(encoder, trace, dh, enc_grad);
      }
      nn::optimizer_step(encoder, enc_grad, enc_opt);
      nn::optimizer_step(head, head_grad, head_opt);
    }
    if (!std::isfinite(row.loss)) throw nn::TrainingError("supervised pretraining: non-finite loss");
    row.loss /= std::max<double>(1.0, n);
    row.accuracy = refs.empty() ? 0.0 : static_cast<double>(correct) / n;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.encoder = std::move(encoder);
  return result;
}

}  // namespace patchmil::supervised
