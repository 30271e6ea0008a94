#include "patchmil/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "patchmil/viz.hpp"

namespace patchmil::cli {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::A: return "A";
    case Condition::B: return "B";
    case Condition::C: return "C";
    case Condition::D: return "D";
  }
  return "?";
}

Condition parse_condition(const std::string& name) {
  if (name == "A") return Condition::A;
  if (name == "B") return Condition::B;
  if (name == "C") return Condition::C;
  if (name == "D") return Condition::D;
  throw ValidationError("condition: expected A, B, C or D, got '" + name + "'");
}

std::string pretraining_note(Condition c) {
  switch (c) {
    case Condition::A: return "none (random init)";
    case Condition::B: return "supervised on oracle instance labels (stand-in for ImageNet weights)";
    case Condition::C: return "self-supervised on auxiliary blob dataset";
    case Condition::D: return "self-supervised on MIL training split";
  }
  return "";
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + f(x);
  return out;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

RunConfig RunConfig::from(const KeyValues& kv) {
  RunConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.manifest = kv.get_string("manifest", c.manifest);
  c.aux_manifest = kv.get_string("aux_manifest", c.aux_manifest);
  c.checkpoint = kv.get_string("checkpoint", c.checkpoint);
  c.condition = parse_condition(kv.get_string("condition", to_string(c.condition)));
  c.encoder.arch = nn::parse_encoder_arch(kv.get_string("encoder", nn::to_string(c.encoder.arch)));
  c.encoder.embed_dim = static_cast<int>(kv.get_int("embed_dim", c.encoder.embed_dim));
  c.attention_dim = static_cast<int>(kv.get_int("attention_dim", c.attention_dim));

  c.gen = synth::gen_config_from(kv, "gen.");
  if (!kv.has("gen.seed")) c.gen.seed = c.seed;

  auto& s = c.ssl;
  s.encoder = c.encoder;
  s.epochs = static_cast<int>(kv.get_int("ssl.epochs", s.epochs));
  s.batch_size = static_cast<int>(kv.get_int("ssl.batch_size", s.batch_size));
  s.optim.lr = kv.get_double("ssl.lr", s.optim.lr);
  s.optim.weight_decay = kv.get_double("ssl.weight_decay", s.optim.weight_decay);
  s.optim.momentum = kv.get_double("ssl.sgd_momentum", s.optim.momentum);
  s.temperature = kv.get_double("ssl.temperature", s.temperature);
  s.queue_size = static_cast<int>(kv.get_int("ssl.queue_size", s.queue_size));
  s.proj_dim = static_cast<int>(kv.get_int("ssl.proj_dim", s.proj_dim));
  s.momentum = kv.get_double("ssl.ema_momentum", s.momentum);
  s.lambda_rec = kv.get_double("ssl.lambda_rec", s.lambda_rec);
  s.instances_per_bag = static_cast<int>(kv.get_int("ssl.instances_per_bag", s.instances_per_bag));
  s.skip_constant_tiles = kv.get_bool("ssl.skip_constant_tiles", s.skip_constant_tiles);
  s.seed = c.seed;

  auto& u = c.supervised;
  u.encoder = c.encoder;
  u.epochs = static_cast<int>(kv.get_int("supervised.epochs", u.epochs));
  u.batch_size = static_cast<int>(kv.get_int("supervised.batch_size", u.batch_size));
  u.optim.lr = kv.get_double("supervised.lr", u.optim.lr);
  u.optim.weight_decay = kv.get_double("supervised.weight_decay", u.optim.weight_decay);
  u.optim.momentum = kv.get_double("supervised.sgd_momentum", u.optim.momentum);
  u.instances_per_bag = static_cast<int>(kv.get_int("supervised.instances_per_bag", u.instances_per_bag));
  u.seed = c.seed;

  auto& m = c.mil;
  m.epochs = static_cast<int>(kv.get_int("mil.epochs", m.epochs));
  m.optim.lr = kv.get_double("mil.lr", m.optim.lr);
  m.optim.weight_decay = kv.get_double("mil.weight_decay", m.optim.weight_decay);
  m.optim.beta1 = kv.get_double("mil.beta1", m.optim.beta1);
  m.optim.beta2 = kv.get_double("mil.beta2", m.optim.beta2);
  m.optim.eps = kv.get_double("mil.eps", m.optim.eps);
  m.mode = mil::parse_train_mode(kv.get_string("mil.mode", mil::to_string(m.mode)));
  m.seed = c.seed;

  if (kv.has("compare.seeds")) {
    c.compare_seeds.clear();
    for (const auto& x : split_list(kv.get_string("compare.seeds", ""))) {
      KeyValues one;
      one.set("compare.seeds", x);
      c.compare_seeds.push_back(one.get_u64("compare.seeds", 0));
    }
  }
  if (kv.has("compare.conditions")) {
    c.compare_conditions.clear();
    for (const auto& x : split_list(kv.get_string("compare.conditions", ""))) c.compare_conditions.push_back(parse_condition(x));
  }
  if (kv.has("compare.modes")) {
    c.compare_modes.clear();
    for (const auto& x : split_list(kv.get_string("compare.modes", ""))) c.compare_modes.push_back(mil::parse_train_mode(x));
  }
  kv.reject_unused();
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  require(c.encoder.embed_dim > 0, "embed_dim must be > 0");
  require(c.attention_dim > 0, "attention_dim must be > 0");
  synth::validate(c.gen);
  ssl::validate(c.ssl);
  const auto& u = c.supervised;
  require(u.epochs >= 0, "supervised.epochs must be >= 0");
  require(u.batch_size >= 1, "supervised.batch_size must be >= 1");
  require(u.optim.lr > 0, "supervised.lr must be > 0");
  require(u.optim.weight_decay >= 0, "supervised.weight_decay must be >= 0");
  require(u.optim.momentum >= 0 && u.optim.momentum < 1, "supervised.sgd_momentum must lie in [0, 1)");
  require(u.instances_per_bag >= 0 && u.instances_per_bag <= kBagSize, "supervised.instances_per_bag must lie in [0, 256]");
  require(c.ssl.optim.momentum >= 0 && c.ssl.optim.momentum < 1, "ssl.sgd_momentum must lie in [0, 1)");
  const auto& m = c.mil;
  require(m.epochs >= 0, "mil.epochs must be >= 0");
  require(m.optim.lr > 0, "mil.lr must be > 0");
  require(m.optim.weight_decay >= 0, "mil.weight_decay must be >= 0");
  require(m.optim.beta1 >= 0 && m.optim.beta1 < 1, "mil.beta1 must lie in [0, 1)");
  require(m.optim.beta2 >= 0 && m.optim.beta2 < 1, "mil.beta2 must lie in [0, 1)");
  require(m.optim.eps > 0, "mil.eps must be > 0");
  require(!c.compare_seeds.empty(), "compare.seeds must list at least one seed");
  require(!c.compare_conditions.empty(), "compare.conditions must list at least one condition");
  require(!c.compare_modes.empty(), "compare.modes must list at least one mode");
  if (c.condition == Condition::A) {
    require(c.checkpoint.empty(), "checkpoint: condition A trains from a random encoder and takes no checkpoint");
    require(m.mode == mil::TrainMode::finetune, "mil.mode: condition A is fine-tune only");
  }
}

namespace {

nn::EncoderConfig condition_encoder(const RunConfig& c, Condition cond) {
  nn::EncoderConfig e = c.encoder;
  if (cond == Condition::A) e.arch = nn::EncoderArch::lenet5;
  return e;
}

BagSet load_manifest_set(const std::string& path, const char* key) {
  require(!path.empty(), std::string(key) + ": no manifest given");
  if (!std::filesystem::exists(path)) throw std::runtime_error(std::string(key) + ": no such file " + path);
  return BagSet::load(std::filesystem::path(path));
}

BagSet nonempty(BagSet set, Split s) {
  if (set.empty()) throw ValidationError("split '" + to_string(s) + "' is empty");
  return set;
}

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

mil::TrainResult train_condition(const RunConfig& c, Condition cond, mil::TrainMode mode, std::uint64_t seed,
                                 const nn::ParamSet<float>* encoder, const BagSet& train, const BagSet& valid,
                                 const Log& log) {
  mil::MilConfig mc = c.mil;
  mc.mode = mode;
  mc.seed = seed;
  mil::MilModel init = encoder ? mil::MilModel::with_encoder(*encoder, c.attention_dim, seed)
                               : mil::MilModel::random(condition_encoder(c, cond), c.attention_dim, seed);
  const std::string tag = to_string(cond) + "/" + mil::to_string(mode) + " seed " + std::to_string(seed);
  return mil::train_mil(mc, train, valid, std::move(init), [&](const mil::EpochLog& r) {
    say(log, tag + " epoch " + std::to_string(r.epoch) + " train " + fmt(r.train_loss) + " valid " + fmt(r.valid_loss));
  });
}

}  // namespace

std::vector<ManifestEntry> cmd_gen(const RunConfig& c, const std::filesystem::path& out, const Log& log) {
  auto entries = synth::gen_dataset(c.gen, out);
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const auto n = class_counts(entries, s);
    say(log, to_string(s) + ": " + std::to_string(n.total) + " slices, " + std::to_string(n.positive) + " positive");
  }
  return entries;
}

ssl::PretrainResult cmd_pretrain(const RunConfig& c, const std::filesystem::path& out, const Log& log) {
  const BagSet train = nonempty(load_manifest_set(c.manifest, "manifest").subset(Split::train), Split::train);
  std::filesystem::create_directories(out);
  auto r = ssl::pretrain(c.ssl, train, [&](const ssl::SslEpochLog& e) {
    say(log, "epoch " + std::to_string(e.epoch) + " contrastive " + fmt(e.contrastive) + " total " + fmt(e.total));
  });
  ssl::save_encoder(out / "encoder.milc", r.encoder);
  ssl::write_ssl_log(out / "ssl_log.csv", r.log);
  return r;
}

mil::TrainResult cmd_train(const RunConfig& c, const std::filesystem::path& out, const Log& log) {
  if (c.condition == Condition::C || c.condition == Condition::D)
    require(!c.checkpoint.empty(), "checkpoint: condition " + to_string(c.condition) + " needs a pretrained encoder");
  if (c.condition == Condition::B) require(c.checkpoint.empty(), "checkpoint: condition B pretrains its own encoder");
  const BagSet all = load_manifest_set(c.manifest, "manifest");
  const BagSet train = nonempty(all.subset(Split::train), Split::train);
  const BagSet valid = nonempty(all.subset(Split::valid), Split::valid);
  std::filesystem::create_directories(out);

  std::optional<nn::ParamSet<float>> encoder;
  if (c.condition == Condition::B) {
    auto sup = supervised::pretrain_supervised(c.supervised, train, [&](const supervised::SupervisedEpochLog& e) {
      say(log, "supervised epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss));
    });
    ssl::save_encoder(out / "encoder_supervised.milc", sup.encoder);
    encoder = std::move(sup.encoder);
  } else if (!c.checkpoint.empty()) {
    encoder = ssl::load_encoder(c.checkpoint);
  }
  auto r = train_condition(c, c.condition, c.mil.mode, c.seed, encoder ? &*encoder : nullptr, train, valid, log);
  nn::save_checkpoint(out / "model.milc", r.model.to_tensors());
  mil::write_training_log(out / "train_log.csv", r.log);
  say(log, "selected epoch " + std::to_string(r.best_epoch));
  return r;
}

mil::Metrics cmd_eval(const std::filesystem::path& model, const std::filesystem::path& manifest, Split split,
                      const std::filesystem::path& out) {
  const auto m = mil::MilModel::from_tensors(nn::load_checkpoint(model));
  const BagSet bags = nonempty(load_manifest_set(manifest.string(), "manifest").subset(split), split);
  const auto r = mil::evaluate(m, bags);
  std::filesystem::create_directories(out);
  mil::write_eval_report(out / ("eval_" + to_string(split) + ".csv"), to_string(split), r.metrics);
  return r.metrics;
}

mil::BagPrediction cmd_viz(const std::filesystem::path& model, const std::filesystem::path& slice,
                           const std::filesystem::path& out, bool write_csv) {
  const auto m = mil::MilModel::from_tensors(nn::load_checkpoint(model));
  if (!std::filesystem::exists(slice)) throw std::runtime_error("slice: no such file " + slice.string());
  const GraySlice gray = apply_window(read_slice(slice));
  const auto pred = mil::classify_bag(m, make_bag(gray, ManifestEntry{}));
  std::filesystem::create_directories(out);
  viz::write_ppm(viz::render_attention(gray, pred.attention), out / "attention.ppm");
  if (write_csv) viz::write_attention_csv(pred.attention, out / "attention.csv");
  return pred;
}

CompareResult cmd_compare(const RunConfig& c, const std::filesystem::path& out, const Log& log) {
  const BagSet all = load_manifest_set(c.manifest, "manifest");
  const BagSet train = nonempty(all.subset(Split::train), Split::train);
  const BagSet valid = nonempty(all.subset(Split::valid), Split::valid);
  const BagSet test = nonempty(all.subset(Split::test), Split::test);
  std::filesystem::create_directories(out);
  const auto wants = [&](Condition x) {
    return std::find(c.compare_conditions.begin(), c.compare_conditions.end(), x) != c.compare_conditions.end();
  };

  BagSet aux;
  if (wants(Condition::C)) {
    std::string path = c.aux_manifest;
    if (path.empty()) {
      synth::GenConfig g = synth::GenConfig::defaults(synth::Task::blob);
      g.seed = c.gen.seed + 1000;
      say(log, "generating auxiliary blob dataset");
      synth::gen_dataset(g, out / "aux_blob");
      path = (out / "aux_blob" / "manifest.jsonl").string();
    }
    aux = nonempty(load_manifest_set(path, "aux_manifest").subset(Split::train), Split::train);
  }

  CompareResult result;
  for (std::uint64_t seed : c.compare_seeds) {
    for (Condition cond : c.compare_conditions) {
      std::optional<nn::ParamSet<float>> encoder;
      if (cond == Condition::B) {
        auto sc = c.supervised;
        sc.seed = seed;
        encoder = supervised::pretrain_supervised(sc, train).encoder;
      } else if (cond == Condition::C || cond == Condition::D) {
        auto sc = c.ssl;
        sc.seed = seed;
        auto r = ssl::pretrain(sc, cond == Condition::C ? aux : train, [&](const ssl::SslEpochLog& e) {
          say(log, to_string(cond) + " ssl seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) +
                       " total " + fmt(e.total));
        });
        ssl::write_ssl_log(out / ("ssl_" + to_string(cond) + "_seed" + std::to_string(seed) + ".csv"), r.log);
        result.ssl_runs.push_back({cond, seed, r.log});
        encoder = std::move(r.encoder);
      }
      for (mil::TrainMode mode : c.compare_modes) {
        if (cond == Condition::A && mode == mil::TrainMode::transfer) continue;
        auto r = train_condition(c, cond, mode, seed, encoder ? &*encoder : nullptr, train, valid, log);
        RunRecord rec{cond, mode, seed, r.best_epoch, mil::evaluate(r.model, test)};
        say(log, to_string(cond) + "/" + mil::to_string(mode) + " seed " + std::to_string(seed) + " test f1 " +
                     fmt(rec.test.metrics.f1));
        result.runs.push_back(std::move(rec));
      }
      if (cond == Condition::A && std::find(c.compare_modes.begin(), c.compare_modes.end(), mil::TrainMode::finetune) ==
                                      c.compare_modes.end()) {
        auto r = train_condition(c, cond, mil::TrainMode::finetune, seed, nullptr, train, valid, log);
        result.runs.push_back({cond, mil::TrainMode::finetune, seed, r.best_epoch, mil::evaluate(r.model, test)});
      }
    }
  }

  std::ofstream runs(out / "runs.csv");
  runs << "condition,mode,seed,best_epoch," << mil::eval_report_header().substr(6) << '\n';
  for (const auto& r : result.runs)
    runs << to_string(r.condition) << ',' << mil::to_string(r.mode) << ',' << r.seed << ',' << r.best_epoch << ','
         << mil::eval_report_row("test", r.test.metrics).substr(5) << '\n';

  for (Condition cond : c.compare_conditions)
    for (mil::TrainMode mode : {mil::TrainMode::transfer, mil::TrainMode::finetune}) {
      std::vector<double> acc, prec, rec, f1;
      for (const auto& r : result.runs)
        if (r.condition == cond && r.mode == mode) {
          acc.push_back(r.test.metrics.accuracy);
          prec.push_back(r.test.metrics.precision);
          rec.push_back(r.test.metrics.recall);
          f1.push_back(r.test.metrics.f1);
        }
      if (f1.empty()) continue;
      result.summary.push_back(
          {cond, mode, pretraining_note(cond), static_cast<int>(f1.size()), median(acc), median(prec), median(rec), median(f1)});
    }
  std::ofstream summary(out / "summary.csv");
  summary << "condition,mode,encoder,pretraining,seeds,acc,prec,rec,f1\n";
  for (const auto& s : result.summary)
    summary << to_string(s.condition) << ',' << mil::to_string(s.mode) << ','
            << nn::to_string(condition_encoder(c, s.condition).arch) << ",\"" << s.pretraining << "\"," << s.seeds << ','
            << fmt(s.acc) << ',' << fmt(s.prec) << ',' << fmt(s.rec) << ',' << fmt(s.f1) << '\n';
  return result;
}

}  // namespace patchmil::cli
