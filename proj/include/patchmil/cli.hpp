#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "patchmil/config.hpp"
#include "patchmil/mil.hpp"
#include "patchmil/ssl.hpp"
#include "patchmil/supervised.hpp"
#include "patchmil/synth.hpp"

namespace patchmil::cli {

/// A: random init, fine-tune only. B: supervised instance pretraining. C: SSL on an auxiliary
/// dataset. D: SSL on the MIL training split.
enum class Condition { A, B, C, D };

std::string to_string(Condition c);
Condition parse_condition(const std::string& name);

struct RunConfig {
  std::uint64_t seed = 0;
  std::string manifest;
  std::string aux_manifest;  // condition C pretraining data; generated (task blob) when empty
  std::string checkpoint;    // encoder initialization for train (conditions C/D)
  Condition condition = Condition::D;
  nn::EncoderConfig encoder;
  int attention_dim = 64;
  synth::GenConfig gen = synth::GenConfig::defaults(synth::Task::blob);
  ssl::SslConfig ssl;
  supervised::SupervisedConfig supervised;
  mil::MilConfig mil;
  std::vector<std::uint64_t> compare_seeds{1, 2, 3};
  std::vector<Condition> compare_conditions{Condition::A, Condition::B, Condition::C, Condition::D};
  std::vector<mil::TrainMode> compare_modes{mil::TrainMode::transfer, mil::TrainMode::finetune};

  /// Reads every known key; unknown keys and out-of-range values raise ValidationError.
  static RunConfig from(const KeyValues& kv);
};

void validate(const RunConfig& c);

/// Optional progress sink; commands stay silent without one.
using Log = std::function<void(const std::string&)>;

std::vector<ManifestEntry> cmd_gen(const RunConfig& c, const std::filesystem::path& out, const Log& log = {});
ssl::PretrainResult cmd_pretrain(const RunConfig& c, const std::filesystem::path& out, const Log& log = {});
mil::TrainResult cmd_train(const RunConfig& c, const std::filesystem::path& out, const Log& log = {});
mil::Metrics cmd_eval(const std::filesystem::path& model, const std::filesystem::path& manifest, Split split,
                      const std::filesystem::path& out);
mil::BagPrediction cmd_viz(const std::filesystem::path& model, const std::filesystem::path& slice,
                           const std::filesystem::path& out, bool write_csv);

struct RunRecord {
  Condition condition;
  mil::TrainMode mode;
  std::uint64_t seed;
  int best_epoch = 0;
  mil::EvalResult test;
};

struct SslRun {
  Condition condition;
  std::uint64_t seed;
  std::vector<ssl::SslEpochLog> log;
};

struct SummaryRow {
  Condition condition;
  mil::TrainMode mode;
  std::string pretraining;
  int seeds = 0;
  double acc = 0, prec = 0, rec = 0, f1 = 0;  // medians over seeds
};

struct CompareResult {
  std::vector<RunRecord> runs;
  std::vector<SslRun> ssl_runs;
  std::vector<SummaryRow> summary;
};

/// Runs every requested condition x mode for each seed, evaluates on the test split and writes
/// runs.csv (per seed) and summary.csv (medians) into `out`.
CompareResult cmd_compare(const RunConfig& c, const std::filesystem::path& out, const Log& log = {});

std::string pretraining_note(Condition c);
double median(std::vector<double> v);

}  // namespace patchmil::cli
