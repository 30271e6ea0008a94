// Acceptance runner: prints one PASS/FAIL line per criterion and exits non-zero if any fails.
// Every threshold is a named constant below.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include "checks.hpp"
#include "helpers.hpp"
#include "patchmil/mil.hpp"
#include "patchmil/ssl.hpp"
#include "patchmil/synth.hpp"
#include "patchmil/viz.hpp"

using namespace patchmil;

namespace {

constexpr int kWindowTriples = 100000;
constexpr double kAttentionHandTol = 1e-12;
constexpr double kSeconds1 = 10.0;

constexpr int kPermutationBags = 100;
constexpr double kPermutationTol = 1e-6;
constexpr double kSeconds2 = 60.0;

constexpr int kGradConfigs = 20;
constexpr double kGradRelTol = 1e-4;
constexpr double kSeconds3 = 300.0;

constexpr double kSumTol = 1e-6;

// End-to-end comparison on the core task.
constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr double kMinF1Gain = 0.10;
constexpr double kMinBaselineF1 = 0.0;
constexpr double kBudgetSeconds = 20 * 60.0;
constexpr int kSslEpochs = 5;            // <= 10
constexpr int kSslInstancesPerBag = 16;  // fresh random subset per bag per epoch
constexpr int kMilEpochs = 10;           // <= 30
constexpr double kMilLr = 3e-3;
constexpr int kAttentionDim = 64;

constexpr double kLocalizationFactor = 2.0;
constexpr std::size_t kPpmWhiteBytes = 14;

using clk = std::chrono::steady_clock;
double since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

void progress(const char* fmt, auto... args) {
  static std::mutex m;
  const std::lock_guard lock(m);
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
  std::fflush(stderr);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome criterion1() {
  const auto t = clk::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> hu(-32768, 32767), lo(-2000, 2000), span(1, 4000);
  int mismatches = 0;
  for (int i = 0; i < kWindowTriples; ++i) {
    const int a = lo(rng), b = a + span(rng), v = hu(rng);
    mismatches += window_value(v, a, b) != testing::window_oracle(v, a, b);
  }
  const auto w = mil::class_weights(8072, 1363, 6709);
  const bool weights_exact = w.positive == 8072.0 / 1363.0 && w.negative == 8072.0 / 6709.0;

  auto att = mil::make_attention_params<double>(1, 1);
  att["w"].values = {1.0};
  att["V"].values = {1.0};
  att["U"].values = {1.0};
  const std::vector<double> h{1.0, -1.0};
  mil::BagForward<double> f;
  mil::attention_forward<double>(h, 2, att, f);
  const auto sg = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double s0 = std::tanh(1.0) * sg(1.0), s1 = std::tanh(-1.0) * sg(-1.0);
  const double a0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
  const double att_err = std::max(std::abs(f.a[0] - a0), std::abs(f.a[1] - (1.0 - a0)));

  Outcome o;
  o.seconds = since(t);
  o.pass = mismatches == 0 && weights_exact && att_err <= kAttentionHandTol && o.seconds < kSeconds1;
  o.detail = fmt("window mismatches %d/%d, class weights exact %s (%.17g, %.17g), attention error %.2e <= %.0e",
                 mismatches, kWindowTriples, weights_exact ? "yes" : "no", w.positive, w.negative, att_err,
                 kAttentionHandTol);
  return o;
}

Outcome criterion2() {
  const auto t = clk::now();
  double theta = 0, attn = 0;
  for (int i = 0; i < kPermutationBags; ++i) {
    const auto r = testing::permutation_check(1000 + i, kBagSize);
    theta = std::max(theta, r.max_theta_diff);
    attn = std::max(attn, r.max_attention_diff);
  }
  Outcome o;
  o.seconds = since(t);
  o.pass = theta <= kPermutationTol && attn <= kPermutationTol && o.seconds < kSeconds2;
  o.detail = fmt("%d bags K=256: max |dtheta| %.2e, max |da| %.2e (tol %.0e)", kPermutationBags, theta, attn,
                 kPermutationTol);
  return o;
}

Outcome criterion3() {
  const auto t = clk::now();
  const int sizes[] = {1, 2, 5};
  double mil_worst = 0;
  std::size_t mil_coords = 0;
  for (int i = 0; i < kGradConfigs; ++i) {
    const auto r = testing::mil_gradient_check(500 + i, sizes[i % 3]);
    mil_worst = std::max(mil_worst, r.max_rel);
    mil_coords += r.checked;
  }
  using testing::SslTerm;
  double ssl_worst = 0;
  std::size_t ssl_coords = 0;
  for (auto term : {SslTerm::contrastive, SslTerm::rec_online, SslTerm::rec_momentum, SslTerm::rec_mixed})
    for (int i = 0; i < kGradConfigs; ++i) {
      const auto r = testing::ssl_gradient_check(700 + 37 * static_cast<int>(term) + i, sizes[i % 3], term);
      ssl_worst = std::max(ssl_worst, r.max_rel);
      ssl_coords += r.checked;
    }
  Outcome o;
  o.seconds = since(t);
  o.pass = mil_worst <= kGradRelTol && ssl_worst <= kGradRelTol && o.seconds < kSeconds3;
  o.detail = fmt("MIL %d configs (%zu coords) max rel %.2e; SSL 4 terms x %d configs (%zu coords) max rel %.2e; tol %.0e",
                 kGradConfigs, mil_coords, mil_worst, kGradConfigs, ssl_coords, ssl_worst, kGradRelTol);
  return o;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion8() {
  const auto t = clk::now();
  testing::TempDir dir("accept_io");
  std::mt19937_64 rng(8);
  bool ctsl = true;
  for (int i = 0; i < 20; ++i) {
    const auto s = testing::random_slice(rng, 512, 512);
    const auto bytes = encode_slice(s);
    write_slice(s, dir / "s.ctsl");
    const auto back = read_slice(dir / "s.ctsl");
    ctsl = ctsl && read_bytes(dir / "s.ctsl") == bytes && encode_slice(back) == bytes && back.data == s.data;
  }
  const auto model = mil::MilModel::random({}, kAttentionDim, 8);
  const auto milc = nn::encode_checkpoint(model.to_tensors());
  nn::save_checkpoint(dir / "m.milc", model.to_tensors());
  const auto reloaded = mil::MilModel::from_tensors(nn::load_checkpoint(dir / "m.milc"));
  const bool milc_ok = read_bytes(dir / "m.milc") == milc && nn::encode_checkpoint(reloaded.to_tensors()) == milc;

  viz::RgbImage white(1, 1);
  white.data = {255, 255, 255};
  const auto ppm = viz::encode_ppm(white);
  const std::vector<std::uint8_t> expect{'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 0xFF, 0xFF, 0xFF};
  const bool ppm_ok = ppm == expect && ppm.size() == kPpmWhiteBytes;
  const bool jet_ok = viz::jet(0.0) == viz::Rgb{0, 0, 128} && viz::jet(1.0) == viz::Rgb{128, 0, 0};

  Outcome o;
  o.seconds = since(t);
  o.pass = ctsl && milc_ok && ppm_ok && jet_ok;
  o.detail = fmt("CTSL round trip %s, MILC round trip %s, 1x1 white PPM %zu bytes %s, jet endpoints %s",
                 ctsl ? "exact" : "DIFFERS", milc_ok ? "exact" : "DIFFERS", ppm.size(), ppm_ok ? "exact" : "WRONG",
                 jet_ok ? "exact" : "WRONG");
  return o;
}

struct SeedRun {
  std::uint64_t seed = 0;
  mil::EvalResult a, d;
  std::vector<ssl::SslEpochLog> ssl_log;
  BagSet test;
};

SeedRun run_seed(std::uint64_t seed) {
  SeedRun r;
  r.seed = seed;
  testing::TempDir dir("accept_core");
  auto t = clk::now();
  auto gen = synth::GenConfig::defaults(synth::Task::core);
  gen.seed = seed;
  synth::gen_dataset(gen, dir.path);
  const auto all = BagSet::load(dir / "manifest.jsonl");
  const auto train = all.subset(Split::train), valid = all.subset(Split::valid);
  r.test = all.subset(Split::test);
  progress("[seed %llu] generated and loaded %zu slices in %.0fs", static_cast<unsigned long long>(seed), all.size(),
           since(t));

  mil::MilConfig mc;
  mc.epochs = kMilEpochs;
  mc.optim.lr = kMilLr;
  mc.seed = seed;

  t = clk::now();
  mc.mode = mil::TrainMode::finetune;
  const auto a = mil::train_mil(mc, train, valid, mil::MilModel::random({}, kAttentionDim, seed));
  r.a = mil::evaluate(a.model, r.test);
  progress("[seed %llu] A fine-tune: best epoch %d, test F1 %.3f (%.0fs)", static_cast<unsigned long long>(seed),
           a.best_epoch, r.a.metrics.f1, since(t));

  t = clk::now();
  ssl::SslConfig sc;
  sc.epochs = kSslEpochs;
  sc.instances_per_bag = kSslInstancesPerBag;
  sc.skip_constant_tiles = true;
  sc.seed = seed;
  const auto pre = ssl::pretrain(sc, train, [&](const ssl::SslEpochLog& l) {
    progress("[seed %llu] SSL epoch %d: total %.4f (contrastive %.4f)", static_cast<unsigned long long>(seed), l.epoch,
             l.total, l.contrastive);
  });
  r.ssl_log = pre.log;
  progress("[seed %llu] SSL pretraining %.0fs", static_cast<unsigned long long>(seed), since(t));

  t = clk::now();
  mc.mode = mil::TrainMode::transfer;
  const auto d = mil::train_mil(mc, train, valid, mil::MilModel::with_encoder(pre.encoder, kAttentionDim, seed));
  r.d = mil::evaluate(d.model, r.test);
  progress("[seed %llu] D transfer: best epoch %d, test F1 %.3f (%.0fs)", static_cast<unsigned long long>(seed),
           d.best_epoch, r.d.metrics.f1, since(t));
  return r;
}

}  // namespace

int main() {
  Outcome out[9];
  progress("criterion %d...", 1);
  out[1] = criterion1();
  progress("criterion %d...", 2);
  out[2] = criterion2();
  progress("criterion %d...", 3);
  out[3] = criterion3();
  progress("criterion %d...", 8);
  out[8] = criterion8();

  progress("%s", "end-to-end runs (criteria 4-7)...");
  const auto t = clk::now();
  // Seeds are independent; run as many side by side as there are hardware threads.
  std::vector<SeedRun> runs(std::size(kSeeds));
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, runs.size());
  std::atomic<std::size_t> next = 0;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < runs.size();) runs[i] = run_seed(kSeeds[i]);
    });
  pool.clear();
  const double e2e = since(t);

  // 4: every classified test bag, both conditions, all seeds
  {
    double worst_sum = 0;
    bool in_range = true;
    std::size_t bags = 0;
    for (const auto& r : runs)
      for (const auto* e : {&r.a, &r.d})
        for (const auto& p : e->predictions) {
          double s = 0;
          for (double a : p.attention) {
            s += a;
            in_range = in_range && a >= 0.0 && a <= 1.0;
          }
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          ++bags;
        }
    out[4].pass = bags > 0 && worst_sum <= kSumTol && in_range;
    out[4].detail = fmt("%zu classified test bags: max |sum a - 1| %.2e (tol %.0e), all a in [0,1] %s", bags, worst_sum,
                        kSumTol, in_range ? "yes" : "no");
  }

  // 5: median test F1 over seeds
  {
    std::vector<double> fa, fd;
    std::string per_seed;
    for (const auto& r : runs) {
      fa.push_back(r.a.metrics.f1);
      fd.push_back(r.d.metrics.f1);
      per_seed += fmt(" seed%llu A %.3f D %.3f;", static_cast<unsigned long long>(r.seed), r.a.metrics.f1, r.d.metrics.f1);
    }
    std::sort(fa.begin(), fa.end());
    std::sort(fd.begin(), fd.end());
    const double ma = fa[fa.size() / 2], md = fd[fd.size() / 2];
    out[5].seconds = e2e;
    out[5].pass = md - ma >= kMinF1Gain && ma >= kMinBaselineF1 && e2e <= kBudgetSeconds;
    out[5].detail = fmt("median F1 D %.3f - A %.3f = %.3f (need >= %.2f), A >= %.1f;%s wall %.0fs on %u hardware threads "
                        "(budget %.0fs)",
                        md, ma, md - ma, kMinF1Gain, kMinBaselineF1, per_seed.c_str(), e2e,
                        std::thread::hardware_concurrency(), kBudgetSeconds);
  }

  // 6: attention mass on oracle-positive patches, correctly predicted positive bags under D
  {
    double mass = 0, share = 0;
    int n = 0;
    for (const auto& r : runs)
      for (std::size_t i = 0; i < r.test.size(); ++i) {
        const auto& p = r.d.predictions[i];
        if (r.test.label(i) != 1 || p.predicted != 1) continue;
        const auto& labels = *r.test.record(i).entry.instance_labels;
        double m = 0;
        int pos = 0;
        for (int k = 0; k < kBagSize; ++k)
          if (labels[k]) {
            m += p.attention[k];
            ++pos;
          }
        mass += m;
        share += static_cast<double>(pos) / kBagSize;
        ++n;
      }
    if (n > 0) {
      mass /= n;
      share /= n;
    }
    out[6].pass = n > 0 && mass >= kLocalizationFactor * share;
    out[6].detail = fmt("%d true-positive bags: mean attention mass on positive patches %.4f vs %.1f x count share %.4f "
                        "(ratio %.2f)",
                        n, mass, kLocalizationFactor, share, share > 0 ? mass / share : 0.0);
  }

  // 7: SSL loss decreases from the first to the last epoch
  {
    bool ok = true;
    std::string per_seed;
    for (const auto& r : runs) {
      const double first = r.ssl_log.front().total, last = r.ssl_log.back().total;
      ok = ok && last < first;
      per_seed += fmt(" seed%llu %.4f -> %.4f;", static_cast<unsigned long long>(r.seed), first, last);
    }
    out[7].pass = ok;
    out[7].detail = fmt("mean SSL loss, epoch 1 -> epoch %d:%s", kSslEpochs, per_seed.c_str());
  }

  bool all = true;
  for (int c = 1; c <= 8; ++c) {
    all = all && out[c].pass;
    std::printf("criterion %d: %s  %s", c, out[c].pass ? "PASS" : "FAIL", out[c].detail.c_str());
    if (c <= 3 || c == 8) std::printf(" [%.1fs]", out[c].seconds);
    std::printf("\n");
  }
  std::fflush(stdout);
  return all ? 0 : 1;
}
