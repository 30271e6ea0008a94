#include "patchmil/mil.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "patchmil/augment.hpp"

namespace patchmil::mil {

std::string to_string(TrainMode mode) { return mode == TrainMode::transfer ? "transfer" : "finetune"; }

TrainMode parse_train_mode(const std::string& name) {
  if (name == "transfer") return TrainMode::transfer;
  if (name == "finetune") return TrainMode::finetune;
  throw nn::ConfigError("unknown training mode '" + name + "' (expected transfer or finetune)");
}

namespace {

void init_head(MilModel& m, int attention_dim, Rng& rng) {
  const int M = m.encoder_config.embed_dim;
  m.attention = make_attention_params<float>(M, attention_dim);
  nn::kaiming_uniform(m.attention["w"], attention_dim, rng);
  nn::kaiming_uniform(m.attention["V"], M, rng);
  nn::kaiming_uniform(m.attention["U"], M, rng);
  m.classifier = make_classifier_params<float>(M);
  nn::kaiming_uniform(m.classifier["w"], M, rng);
}

/// Instances of a bag grouped by identical pixel content (background tiles repeat a lot).
struct InstanceGroups {
  std::vector<int> unique;    // index of the first instance of each group
  std::vector<int> group_of;  // instance -> group
};

InstanceGroups group_identical(const Bag& bag) {
  InstanceGroups g;
  const int K = static_cast<int>(bag.instances.size());
  g.group_of.resize(K);
  std::unordered_map<std::uint64_t, std::vector<int>> by_hash;
  for (int k = 0; k < K; ++k) {
    const auto& d = bag.instances[k].data;
    std::uint64_t h = 1469598103934665603ull;
    for (float v : d) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
    auto& bucket = by_hash[h];
    int found = -1;
    for (int gi : bucket)
      if (bag.instances[g.unique[gi]].data == d) {
        found = gi;
        break;
      }
    if (found < 0) {
      found = static_cast<int>(g.unique.size());
      g.unique.push_back(k);
      bucket.push_back(found);
    }
    g.group_of[k] = found;
  }
  return g;
}

/// Trainable state of one run; encoder traces are kept per unique instance for fine-tuning.
struct Trainer {
  const nn::EncoderNet& net;
  MilModel& model;
  ParamSet<float> enc_grad, att_grad, cls_grad;
  std::vector<nn::EncoderTrace<float>> traces;
  std::vector<float> H, dH, dU;
  BagForward<float> fwd;

  Trainer(const nn::EncoderNet& n, MilModel& m)
      : net(n),
        model(m),
        enc_grad(m.encoder.zeros_like()),
        att_grad(m.attention.zeros_like()),
        cls_grad(m.classifier.zeros_like()) {}

  /// Forward through the encoder keeping traces; fills H (K x M).
  void embed_with_traces(const Bag& bag, const InstanceGroups& groups) {
    const int M = model.embed_dim();
    const std::size_t U = groups.unique.size();
    if (traces.size() < U) traces.resize(U);
    for (std::size_t u = 0; u < U; ++u)
      net.forward<float>(model.encoder, bag.instances[groups.unique[u]].data, 1, traces[u]);
    H.resize(bag.instances.size() * M);
    for (std::size_t k = 0; k < bag.instances.size(); ++k) {
      auto out = traces[groups.group_of[k]].output();
      std::copy(out.begin(), out.end(), H.begin() + k * M);
    }
  }

  void encoder_backward(const InstanceGroups& groups) {
    const int M = model.embed_dim();
    dU.assign(groups.unique.size() * M, 0.0f);
    for (std::size_t k = 0; k < groups.group_of.size(); ++k)
      for (int m = 0; m < M; ++m) dU[groups.group_of[k] * M + m] += dH[k * M + m];
    for (std::size_t u = 0; u < groups.unique.size(); ++u)
      net.backward<float>(model.encoder, traces[u], std::span<const float>(dU).subspan(u * M, M), enc_grad);
  }
};

double bag_loss(const MilModel& model, std::span<const float> H, int K, int label, const ClassWeights& w) {
  BagForward<float> f;
  bag_forward<float>(H, K, model.attention, model.classifier, f);
  return weighted_bce<double>(f.theta, label, w.positive, w.negative);
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw nn::TrainingError(std::string("non-finite ") + what);
}

}  // namespace

MilModel MilModel::random(const nn::EncoderConfig& encoder_config, int attention_dim, std::uint64_t seed) {
  Rng rng(seed);
  MilModel m;
  m.encoder_config = encoder_config;
  m.encoder = nn::EncoderNet(encoder_config).init_params<float>(rng);
  init_head(m, attention_dim, rng);
  return m;
}

MilModel MilModel::with_encoder(ParamSet<float> encoder, int attention_dim, std::uint64_t seed) {
  Rng rng(seed);
  MilModel m;
  m.encoder_config = nn::infer_encoder_config(encoder);
  nn::EncoderNet(m.encoder_config).check_params(encoder);
  m.encoder = std::move(encoder);
  // Keep the head draws identical to MilModel::random so conditions differ only in the encoder.
  (void)nn::EncoderNet(m.encoder_config).init_params<float>(rng);
  init_head(m, attention_dim, rng);
  return m;
}

nn::TensorMap MilModel::to_tensors() const {
  nn::TensorMap out;
  nn::append_component(out, "encoder.", encoder);
  nn::append_component(out, "attention.", attention);
  nn::append_component(out, "classifier.", classifier);
  return out;
}

MilModel MilModel::from_tensors(const nn::TensorMap& tensors) {
  MilModel m;
  auto enc = nn::extract_component(tensors, "encoder.");
  m.encoder_config = nn::infer_encoder_config(enc);
  m.encoder = nn::EncoderNet(m.encoder_config).make_params<float>();
  nn::restore_component(tensors, "encoder.", m.encoder);
  const int M = m.encoder_config.embed_dim;
  const auto att = nn::extract_component(tensors, "attention.");
  if (!att.contains("w")) throw nn::ConfigError("checkpoint has no attention parameters");
  m.attention = make_attention_params<float>(M, static_cast<int>(att["w"].numel()));
  nn::restore_component(tensors, "attention.", m.attention);
  m.classifier = make_classifier_params<float>(M);
  nn::restore_component(tensors, "classifier.", m.classifier);
  return m;
}

std::vector<float> embed_bag(const nn::EncoderNet& net, const ParamSet<float>& encoder, const Bag& bag) {
  const int M = net.embed_dim();
  const auto groups = group_identical(bag);
  std::vector<float> H(bag.instances.size() * M);
  nn::EncoderTrace<float> trace;
  std::vector<float> rows(groups.unique.size() * M);
  for (std::size_t u = 0; u < groups.unique.size(); ++u) {
    net.forward<float>(encoder, bag.instances[groups.unique[u]].data, 1, trace);
    std::copy(trace.output().begin(), trace.output().end(), rows.begin() + u * M);
  }
  for (std::size_t k = 0; k < bag.instances.size(); ++k)
    std::copy_n(rows.begin() + groups.group_of[k] * M, M, H.begin() + k * M);
  return H;
}

BagPrediction classify_embeddings(const MilModel& model, std::span<const float> H, int K) {
  // The head runs in double so that the reported attention sums to 1 well inside float rounding.
  const std::vector<double> Hd(H.begin(), H.end());
  BagForward<double> f;
  bag_forward<double>(Hd, K, model.attention.cast<double>(), model.classifier.cast<double>(), f);
  BagPrediction p;
  p.theta = f.theta;
  p.attention.assign(f.a.begin(), f.a.end());
  p.predicted = p.theta >= 0.5 ? 1 : 0;
  return p;
}

BagPrediction classify_bag(const MilModel& model, const Bag& bag) {
  const nn::EncoderNet net(model.encoder_config);
  const auto H = embed_bag(net, model.encoder, bag);
  return classify_embeddings(model, H, static_cast<int>(bag.instances.size()));
}

ClassWeights class_weights(std::size_t total, std::size_t positives, std::size_t negatives) {
  if (positives == 0 || negatives == 0)
    throw ValidationError("class weights: training split needs both classes (positives=" +
                          std::to_string(positives) + ", negatives=" + std::to_string(negatives) + ")");
  const double n = static_cast<double>(total);
  return {n / static_cast<double>(positives), n / static_cast<double>(negatives)};
}

Metrics metrics_from_counts(long tp, long fp, long fn, long tn) {
  Metrics m{tp, fp, fn, tn};
  const long total = tp + fp + fn + tn;
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

EvalResult evaluate(const MilModel& model, const BagSet& bags) {
  if (bags.empty()) throw ValidationError("evaluate: split is empty");
  const nn::EncoderNet net(model.encoder_config);
  EvalResult r;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const Bag bag = bags.bag(i);
    const auto H = embed_bag(net, model.encoder, bag);
    auto p = classify_embeddings(model, H, static_cast<int>(bag.instances.size()));
    const int y = bags.label(i);
    if (p.predicted == 1) (y == 1 ? tp : fp)++;
    else (y == 1 ? fn : tn)++;
    r.predictions.push_back(std::move(p));
  }
  r.metrics = metrics_from_counts(tp, fp, fn, tn);
  return r;
}

TrainResult train_mil(const MilConfig& config, const BagSet& train, const BagSet& valid, MilModel init,
                      const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.empty()) throw ValidationError("train_mil: training split is empty");
  if (valid.empty()) throw ValidationError("train_mil: validation split is empty");
  if (config.epochs < 0) throw nn::ConfigError("train_mil: epochs must be >= 0");

  std::size_t positives = 0;
  for (std::size_t i = 0; i < train.size(); ++i) positives += train.label(i) == 1;
  TrainResult result;
  result.weights = class_weights(train.size(), positives, train.size() - positives);
  const ClassWeights w = result.weights;

  MilModel model = std::move(init);
  model.encoder_frozen = config.mode == TrainMode::transfer;
  const nn::EncoderNet net(model.encoder_config);
  net.check_params(model.encoder);
  result.model = model;

  // Frozen encoder: embeddings never change, compute them once.
  std::vector<std::vector<float>> train_cache, valid_cache;
  if (model.encoder_frozen) {
    for (std::size_t i = 0; i < train.size(); ++i) train_cache.push_back(embed_bag(net, model.encoder, train.bag(i)));
    for (std::size_t i = 0; i < valid.size(); ++i) valid_cache.push_back(embed_bag(net, model.encoder, valid.bag(i)));
  }

  Trainer tr(net, model);
  nn::OptimState<float> enc_opt(config.optim, model.encoder);
  nn::OptimState<float> att_opt(config.optim, model.attention);
  nn::OptimState<float> cls_opt(config.optim, model.classifier);
  Rng rng(config.seed ^ 0x6d696c5f747261ull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t i : order) {
      const int y = train.label(i);
      int K;
      Bag bag;
      InstanceGroups groups;
      std::span<const float> H;
      if (model.encoder_frozen) {
        H = train_cache[i];
        K = static_cast<int>(H.size() / model.embed_dim());
      } else {
        bag = train.bag(i);
        groups = group_identical(bag);
        tr.embed_with_traces(bag, groups);
        H = tr.H;
        K = static_cast<int>(bag.instances.size());
      }
      bag_forward<float>(H, K, model.attention, model.classifier, tr.fwd);
      const double loss = weighted_bce<double>(tr.fwd.theta, y, w.positive, w.negative);
      check_finite(loss, "training loss");
      train_sum += loss;
      const float dlogit = static_cast<float>(weighted_bce_logit_grad<double>(tr.fwd.theta, y, w.positive, w.negative));

      tr.att_grad.set_zero();
      tr.cls_grad.set_zero();
      tr.dH.assign(H.size(), 0.0f);
      bag_backward<float>(H, model.attention, model.classifier, tr.fwd, dlogit, tr.att_grad, tr.cls_grad, tr.dH);
      if (!model.encoder_frozen) {
        tr.enc_grad.set_zero();
        tr.encoder_backward(groups);
        nn::optimizer_step(model.encoder, tr.enc_grad, enc_opt);
      }
      nn::optimizer_step(model.attention, tr.att_grad, att_opt);
      nn::optimizer_step(model.classifier, tr.cls_grad, cls_opt);
    }

    double valid_sum = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      if (model.encoder_frozen) {
        const auto& H = valid_cache[i];
        valid_sum += bag_loss(model, H, static_cast<int>(H.size() / model.embed_dim()), valid.label(i), w);
      } else {
        const Bag bag = valid.bag(i);
        const auto H = embed_bag(net, model.encoder, bag);
        valid_sum += bag_loss(model, H, static_cast<int>(bag.instances.size()), valid.label(i), w);
      }
    }
    const EpochLog row{epoch, train_sum / train.size(), valid_sum / valid.size()};
    check_finite(row.valid_loss, "validation loss");
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (row.valid_loss < best) {
      best = row.valid_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,valid_loss\n";
  out.precision(9);
  for (const auto& r : log) out << r.epoch << ',' << r.train_loss << ',' << r.valid_loss << '\n';
}

std::string eval_report_header() { return "split,acc,prec,rec,f1,TP,FP,FN,TN"; }

std::string eval_report_row(const std::string& split, const Metrics& m) {
  std::ostringstream s;
  s.precision(6);
  s << split << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.tp << ','
    << m.fp << ',' << m.fn << ',' << m.tn;
  return s.str();
}

void write_eval_report(const std::filesystem::path& path, const std::string& split, const Metrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << eval_report_header() << '\n' << eval_report_row(split, m) << '\n';
}

}  // namespace patchmil::mil
