#include "patchmil/ssl.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "patchmil/nn/checkpoint.hpp"

namespace patchmil::ssl {

void validate(const SslConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
  };
  require(c.epochs >= 0, "ssl.epochs must be >= 0");
  require(c.batch_size >= 1, "ssl.batch_size must be >= 1");
  require(c.temperature > 0, "ssl.temperature must be > 0");
  require(c.queue_size >= 0, "ssl.queue_size must be >= 0");
  require(c.proj_dim >= 1, "ssl.proj_dim must be >= 1");
  require(c.momentum >= 0 && c.momentum < 1, "ssl.momentum must lie in [0, 1)");
  require(c.lambda_rec >= 0, "ssl.lambda_rec must be >= 0");
  require(c.instances_per_bag >= 0 && c.instances_per_bag <= kBagSize, "ssl.instances_per_bag must lie in [0, 256]");
  require(c.optim.lr > 0, "ssl.lr must be > 0");
  require(c.optim.weight_decay >= 0, "ssl.weight_decay must be >= 0");
}

void FeatureQueue::fill_random(Rng& rng) {
  std::normal_distribution<double> gauss;
  std::vector<float> rows(static_cast<std::size_t>(capacity_) * dim_);
  for (int r = 0; r < capacity_; ++r) {
    double n2 = 0;
    std::vector<double> v(dim_);
    do {
      n2 = 0;
      for (auto& x : v) {
        x = gauss(rng);
        n2 += x * x;
      }
    } while (n2 == 0);
    const double norm = std::sqrt(n2);
    for (int i = 0; i < dim_; ++i) rows[static_cast<std::size_t>(r) * dim_ + i] = static_cast<float>(v[i] / norm);
  }
  push(rows);
}

void FeatureQueue::push(std::span<const float> rows) {
  if (dim_ == 0 || rows.size() % dim_ != 0) throw nn::ConfigError("queue: row size mismatch");
  if (capacity_ == 0) return;
  const int n = static_cast<int>(rows.size() / dim_);
  for (int r = 0; r < n; ++r) {
    std::copy_n(rows.begin() + static_cast<std::size_t>(r) * dim_, dim_, data_.begin() + static_cast<std::size_t>(head_) * dim_);
    head_ = (head_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
  }
}

std::vector<float> FeatureQueue::ordered() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(count_) * dim_);
  const int start = count_ < capacity_ ? 0 : head_;
  for (int i = 0; i < count_; ++i) {
    const auto* row = data_.data() + static_cast<std::size_t>((start + i) % capacity_) * dim_;
    out.insert(out.end(), row, row + dim_);
  }
  return out;
}

SslState init_ssl(const SslConfig& config) {
  validate(config);
  SslState s;
  s.config = config;
  s.rng.seed(config.seed);
  const nn::EncoderNet enc(config.encoder);
  const nn::DecoderNet dec(config.encoder.embed_dim);
  s.params.encoder = enc.init_params<float>(s.rng);
  s.params.projection = make_projection_params<float>(config.encoder.embed_dim, config.proj_dim);
  nn::kaiming_uniform(s.params.projection.at(0), config.encoder.embed_dim, s.rng);
  s.params.decoder = dec.init_params<float>(s.rng);
  s.params.encoder_m = s.params.encoder;
  s.params.projection_m = s.params.projection;
  s.queue = FeatureQueue(config.queue_size, config.proj_dim);
  s.queue.fill_random(s.rng);
  s.encoder_opt = nn::OptimState<float>(config.optim, s.params.encoder);
  s.projection_opt = nn::OptimState<float>(config.optim, s.params.projection);
  s.decoder_opt = nn::OptimState<float>(config.optim, s.params.decoder);
  return s;
}

double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  for (;;) {
    const double x = ga(rng), y = gb(rng);
    if (x + y > 0) return x / (x + y);
  }
}

SslLosses<double> ssl_step(SslState& state, std::span<const PatchInstance> instances) {
  if (instances.empty()) throw ValidationError("ssl_step: empty batch");
  const auto& c = state.config;
  const int B = static_cast<int>(instances.size());
  SslBatch<float> batch;
  batch.size = B;
  batch.lambda = static_cast<float>(sample_beta(state.rng));
  batch.view1.reserve(static_cast<std::size_t>(B) * kInstanceValues);
  for (const auto& inst : instances) {
    const ViewPair v = make_views(inst, state.rng);
    batch.view1.insert(batch.view1.end(), v.view1.data.begin(), v.view1.data.end());
    batch.view2.insert(batch.view2.end(), v.view2.data.begin(), v.view2.data.end());
    batch.rec1.insert(batch.rec1.end(), v.rec1.data.begin(), v.rec1.data.end());
    batch.rec2.insert(batch.rec2.end(), v.rec2.data.begin(), v.rec2.data.end());
    for (double x : encode_transform(v.record1)) batch.t1.push_back(static_cast<float>(x));
    for (double x : encode_transform(v.record2)) batch.t2.push_back(static_cast<float>(x));
  }

  const nn::EncoderNet enc(c.encoder);
  const nn::DecoderNet dec(c.encoder.embed_dim);
  auto grads = SslGrads<float>::zeros_like(state.params);
  std::vector<float> keys;
  const auto losses = ssl_objective<float>(enc, dec, state.params, batch, state.queue.rows(), c.temperature,
                                           SslLossWeights::with_lambda_rec(c.lambda_rec), &grads, &keys);

  nn::optimizer_step(state.params.encoder, grads.encoder, state.encoder_opt);
  nn::optimizer_step(state.params.projection, grads.projection, state.projection_opt);
  nn::optimizer_step(state.params.decoder, grads.decoder, state.decoder_opt);
  momentum_update(state.params.encoder_m, state.params.encoder, c.momentum);
  momentum_update(state.params.projection_m, state.params.projection, c.momentum);
  state.queue.push(keys);
  ++state.steps;
  return {losses.contrastive, losses.rec_online, losses.rec_momentum, losses.rec_mixed, losses.total};
}

PretrainResult pretrain(const SslConfig& config, const BagSet& train,
                        const std::function<void(const SslEpochLog&)>& on_epoch) {
  if (train.empty()) throw ValidationError("pretrain: training split is empty");
  SslState state = init_ssl(config);
  PretrainResult result;

  struct Ref {
    std::uint32_t bag;
    std::uint16_t tile;
  };
  // Constant tiles (air) carry no texture; their views differ only by crop/cutout zeros.
  std::vector<std::vector<int>> informative(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    for (int k = 0; k < kBagSize; ++k)
      if (!config.skip_constant_tiles || !tile_is_constant(train.record(i).slice, k)) informative[i].push_back(k);
  std::vector<Ref> refs;
  std::vector<PatchInstance> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    refs.clear();
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto& tiles = informative[i];
      std::size_t take = tiles.size();
      if (config.instances_per_bag > 0) {
        std::shuffle(tiles.begin(), tiles.end(), state.rng);
        take = std::min<std::size_t>(take, config.instances_per_bag);
      }
      for (std::size_t j = 0; j < take; ++j)
        refs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint16_t>(tiles[j])});
    }
    std::shuffle(refs.begin(), refs.end(), state.rng);

    SslEpochLog row;
    row.epoch = epoch;
    long steps = 0;
    for (std::size_t start = 0; start < refs.size(); start += config.batch_size) {
      const std::size_t end = std::min(refs.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t r = start; r < end; ++r)
        batch.push_back(extract_instance(train.record(refs[r].bag).slice, refs[r].tile));
      const auto l = ssl_step(state, batch);
      row.contrastive += l.contrastive;
      row.rec_online += l.rec_online;
      row.rec_momentum += l.rec_momentum;
      row.rec_mixed += l.rec_mixed;
      row.total += l.total;
      ++steps;
    }
    for (double* v : {&row.contrastive, &row.rec_online, &row.rec_momentum, &row.rec_mixed, &row.total})
      *v /= static_cast<double>(std::max(steps, 1L));
    row.steps = steps;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.encoder = state.params.encoder;
  return result;
}

void save_encoder(const std::filesystem::path& path, const ParamSet<float>& encoder) {
  nn::TensorMap out;
  nn::append_component(out, "encoder.", encoder);
  nn::save_checkpoint(path, out);
}

ParamSet<float> load_encoder(const std::filesystem::path& path) {
  const auto file = nn::load_checkpoint(path);
  auto enc = nn::extract_component(file, "encoder.");
  const nn::EncoderNet net(nn::infer_encoder_config(enc));
  auto params = net.make_params<float>();
  nn::restore_component(file, "encoder.", params);
  return params;
}

void write_ssl_log(const std::filesystem::path& path, const std::vector<SslEpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,contrastive,rec_online,rec_momentum,rec_mixed,total\n";
  out.precision(9);
  for (const auto& r : log)
    out << r.epoch << ',' << r.contrastive << ',' << r.rec_online << ',' << r.rec_momentum << ',' << r.rec_mixed
        << ',' << r.total << '\n';
}

}  // namespace patchmil::ssl
