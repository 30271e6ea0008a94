#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "checks.hpp"
#include "helpers.hpp"
#include "patchmil/ssl.hpp"

using namespace patchmil;
using namespace patchmil::ssl;

TEST_CASE("momentum update") {
  ParamSet<double> t, o;
  t.add("w", {1}).values = {2.0};
  o.add("w", {1}).values = {0.0};
  auto a = t;
  momentum_update(a, o, 0.99);
  CHECK(a["w"].values[0] == doctest::Approx(1.98).epsilon(1e-15));
  auto b = t;
  momentum_update(b, o, 0.0);
  CHECK(b == o);
  auto c = t;
  momentum_update(c, o, 1.0);
  CHECK(c == t);

  // contraction toward the online parameters
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  ParamSet<double> x, y;
  x.add("v", {50});
  y.add("v", {50});
  for (int i = 0; i < 50; ++i) {
    x["v"].values[i] = u(rng);
    y["v"].values[i] = u(rng);
  }
  const auto before = x;
  momentum_update(x, y, 0.7);
  for (int i = 0; i < 50; ++i)
    CHECK(std::abs(x["v"].values[i] - y["v"].values[i]) ==
          doctest::Approx(0.7 * std::abs(before["v"].values[i] - y["v"].values[i])).epsilon(1e-12));

  ParamSet<double> other;
  other.add("w", {2});
  CHECK_THROWS_AS(momentum_update(a, other, 0.5), nn::ConfigError);
  CHECK_THROWS_AS(momentum_update(a, o, 1.5), nn::ConfigError);
}

TEST_CASE("contrastive loss hand cases") {
  const std::vector<double> q{1, 0}, k{1, 0}, orth{0, 1};
  CHECK(contrastive_loss<double>(q, k, {}, 2, 1.0) == doctest::Approx(0.0));
  CHECK(std::abs(contrastive_loss<double>(q, k, orth, 2, 1.0) + std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))) < 1e-12);
  CHECK(std::abs(contrastive_loss<double>(q, k, orth, 2, 1.0) - 0.3133) < 1e-4);
  CHECK(std::abs(contrastive_loss<double>(q, orth, q, 2, 1.0) - 1.3133) < 1e-4);

  const std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(contrastive_loss<double>(zero, k, orth, 2, 1.0), nn::TrainingError);
  CHECK_THROWS_AS(contrastive_loss<double>(q, zero, orth, 2, 1.0), nn::TrainingError);

  // nonnegative and decreasing as the key turns toward the query, negatives fixed
  const std::vector<double> negs{0, 1, -0.6, 0.8};
  double prev = INFINITY;
  for (double angle = 3.0; angle >= 0.0; angle -= 0.25) {
    const std::vector<double> ka{std::cos(angle), std::sin(angle)};
    const double l = contrastive_loss<double>(q, ka, negs, 2, 0.2);
    CHECK(l >= 0.0);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("normalization: unit rows, zero rows pass no gradient") {
  const std::vector<double> u{3, 4};
  std::vector<double> q(2), du(2);
  CHECK(normalize<double>(u, q) == 5.0);
  CHECK(q[0] == 0.6);
  CHECK(q[1] == 0.8);
  const std::vector<double> z{0, 0}, dq{1, 1};
  CHECK(normalize<double>(z, q) == 0.0);
  CHECK(q == std::vector<double>{0, 0});
  normalize_backward<double>(q, 0.0, dq, du);
  CHECK(du == std::vector<double>{0, 0});
}

TEST_CASE("mixup and reconstruction loss") {
  const std::vector<double> a{2, 0}, b{0, 2};
  CHECK(mixup_features<double>(a, b, 1.0) == a);
  CHECK(mixup_features<double>(a, b, 0.5) == std::vector<double>{1, 1});
  const std::vector<double> d{1, 2}, t{0, 0};
  CHECK(reconstruction_loss<double>(d, t) == 2.5);
  CHECK(reconstruction_loss<double>(d, d) == 0.0);
  const std::vector<double> shifted{1.5, 2.5};
  CHECK(reconstruction_loss<double>(shifted, d) == 0.25);
  const std::vector<double> one{1};
  CHECK_THROWS_AS(reconstruction_loss<double>(one, d), nn::ConfigError);
}

TEST_CASE("Beta(1,1) mixup weights are uniform") {
  Rng rng(42);
  const int n = 20000;
  std::vector<double> x(n);
  for (auto& v : x) v = sample_beta(rng);
  std::sort(x.begin(), x.end());
  double d = 0;
  for (int i = 0; i < n; ++i) d = std::max({d, std::abs(x[i] - static_cast<double>(i) / n), std::abs(x[i] - (i + 1.0) / n)});
  // Kolmogorov-Smirnov at the 1% level: 1.63 / sqrt(n)
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)));
  CHECK(x.front() >= 0.0);
  CHECK(x.back() <= 1.0);
}

TEST_CASE("feature queue is a bounded FIFO of unit rows") {
  FeatureQueue q(3, 2);
  CHECK(q.size() == 0);
  q.push(std::vector<float>{1, 0, 0, 1});
  CHECK(q.size() == 2);
  q.push(std::vector<float>{-1, 0, 0, -1});
  CHECK(q.size() == 3);
  CHECK(q.ordered() == std::vector<float>{0, 1, -1, 0, 0, -1});
  CHECK_THROWS_AS(q.push(std::vector<float>{1, 2, 3}), nn::ConfigError);

  FeatureQueue r(64, 8);
  Rng rng(3);
  r.fill_random(rng);
  CHECK(r.size() == 64);
  const auto rows = r.rows();
  for (int i = 0; i < 64; ++i) {
    double n2 = 0;
    for (int j = 0; j < 8; ++j) n2 += rows[i * 8 + j] * rows[i * 8 + j];
    CHECK(std::abs(n2 - 1.0) < 1e-6);
  }
}

TEST_CASE("every SSL loss term has correct gradients") {
  for (auto term : {testing::SslTerm::contrastive, testing::SslTerm::rec_online, testing::SslTerm::rec_momentum,
                    testing::SslTerm::rec_mixed, testing::SslTerm::total})
    for (int B : {1, 2}) {
      const auto r = testing::ssl_gradient_check(7 + B + 10 * static_cast<int>(term), B, term, 8);
      INFO("term ", static_cast<int>(term), " B=", B, " worst ", r.worst);
      CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("ssl steps are deterministic and the loss decomposes") {
  SslConfig cfg;
  cfg.encoder = {nn::EncoderArch::lenet5, 16};
  cfg.queue_size = 32;
  cfg.proj_dim = 8;
  cfg.batch_size = 4;
  cfg.seed = 5;
  std::mt19937_64 rng(1);
  std::vector<PatchInstance> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(testing::random_instance(rng));

  auto a = init_ssl(cfg), b = init_ssl(cfg);
  const auto la = ssl_step(a, batch);
  const auto lb = ssl_step(b, batch);
  CHECK(la.total == lb.total);
  for (std::size_t i = 0; i < a.params.encoder.size(); ++i) {
    INFO(a.params.encoder.name(i));
    CHECK(a.params.encoder.at(i).values == b.params.encoder.at(i).values);
  }
  CHECK(la.total == doctest::Approx(la.contrastive + la.rec_online + la.rec_momentum + la.rec_mixed));
  CHECK(a.queue.size() == 32);
  CHECK(a.steps == 1);
  const auto keys = a.queue.ordered();
  for (int i = 0; i < 4; ++i) {
    double n2 = 0;
    for (int j = 0; j < 8; ++j) n2 += keys[(28 + i) * 8 + j] * keys[(28 + i) * 8 + j];
    CHECK(std::abs(n2 - 1.0) < 1e-5);
  }

  cfg.lambda_rec = 0.0;
  auto c = init_ssl(cfg);
  const auto lc = ssl_step(c, batch);
  CHECK(lc.total == doctest::Approx(lc.contrastive).epsilon(1e-6));

  CHECK_THROWS_AS(ssl_step(c, {}), ValidationError);
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(init_ssl(cfg), ValidationError);
}

TEST_CASE("pretraining: step counts, zero epochs, determinism, checkpoint") {
  const auto bags = testing::synthetic_bags(synth::Task::blob, 1, 1, 8);
  SslConfig cfg;
  cfg.encoder = {nn::EncoderArch::lenet5, 8};
  cfg.queue_size = 64;
  cfg.proj_dim = 4;
  cfg.batch_size = 256;
  cfg.seed = 2;
  cfg.epochs = 0;
  const auto init = pretrain(cfg, bags);
  CHECK(init.log.empty());
  CHECK(init.encoder == init_ssl(cfg).params.encoder);

  // 2 bags x 32 sampled instances in batches of 16 -> 4 steps per epoch
  cfg.epochs = 1;
  cfg.instances_per_bag = 32;
  cfg.batch_size = 16;
  int epochs_seen = 0;
  const auto r1 = pretrain(cfg, bags, [&](const SslEpochLog&) { ++epochs_seen; });
  const auto r2 = pretrain(cfg, bags);
  CHECK(epochs_seen == 1);
  CHECK(r1.encoder == r2.encoder);
  CHECK(r1.log[0].total == r2.log[0].total);
  auto state = init_ssl(cfg);
  CHECK_FALSE(r1.encoder == state.params.encoder);

  testing::TempDir dir("ssl");
  save_encoder(dir / "enc.milc", r1.encoder);
  CHECK(load_encoder(dir / "enc.milc") == r1.encoder);
  write_ssl_log(dir / "log.csv", r1.log);
  std::ifstream in(dir / "log.csv");
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,contrastive,rec_online,rec_momentum,rec_mixed,total");
  CHECK(row.rfind("1,", 0) == 0);
  CHECK_FALSE(std::getline(in, extra));

  CHECK_THROWS_AS(pretrain(cfg, BagSet()), ValidationError);
}

TEST_CASE("sampling: full bags, subsets and constant tiles") {
  const auto bags = testing::synthetic_bags(synth::Task::blob, 1, 1, 9);
  SslConfig cfg;
  cfg.encoder = {nn::EncoderArch::lenet5, 8};
  cfg.queue_size = 64;
  cfg.proj_dim = 4;
  cfg.epochs = 1;
  cfg.seed = 1;

  cfg.batch_size = 256;  // one step per full bag
  CHECK(pretrain(cfg, bags).log[0].steps == 2);
  cfg.batch_size = 100;  // 512 instances -> 6 batches
  CHECK(pretrain(cfg, bags).log[0].steps == 6);

  cfg.instances_per_bag = 32;
  cfg.batch_size = 16;
  CHECK(pretrain(cfg, bags).log[0].steps == 4);

  // air outside the skull is constant, so skipping it leaves fewer instances
  cfg.instances_per_bag = 0;
  cfg.batch_size = 1;
  cfg.skip_constant_tiles = true;
  long informative = 0;
  for (std::size_t i = 0; i < bags.size(); ++i)
    for (int k = 0; k < kBagSize; ++k) informative += !tile_is_constant(bags.record(i).slice, k);
  CHECK(informative < 2 * kBagSize);
  CHECK(pretrain(cfg, bags).log[0].steps == informative);
}
