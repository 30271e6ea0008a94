// patchmil: synthetic data generation, SSL pretraining, MIL training, evaluation,
// attention maps and the condition comparison harness.

#include <CLI11.hpp>

#include <iostream>

#include "patchmil/cli.hpp"

using namespace patchmil;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value settings file");
  cmd->add_option("--seed", c.seed, "random seed (overrides the config file)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.sets, "extra key=value setting, repeatable");
}

KeyValues settings(const Common& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  KeyValues kv = c.config.empty() ? KeyValues() : KeyValues::load(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : extra)
    if (!v.empty()) kv.set(k, v);
  if (c.seed) kv.set("seed", std::to_string(*c.seed));
  return kv;
}

void print(const std::string& line) { std::cerr << line << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based multiple instance learning on CT-like slices"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (CTSL slices + manifest.jsonl)");
  std::string task;
  add_common(gen, common);
  gen->add_option("--task", task, "blob or core");

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  std::string manifest;
  add_common(pretrain, common);
  pretrain->add_option("--manifest", manifest, "dataset manifest");

  auto* train = app.add_subcommand("train", "train the MIL classifier");
  std::string condition, mode, checkpoint;
  add_common(train, common);
  train->add_option("--manifest", manifest, "dataset manifest");
  train->add_option("--condition", condition, "A, B, C or D");
  train->add_option("--mode", mode, "transfer or finetune");
  train->add_option("--checkpoint", checkpoint, "pretrained encoder (conditions C and D)");

  auto* eval = app.add_subcommand("eval", "evaluate a model on one split");
  std::string model, split = "test";
  add_common(eval, common);
  eval->add_option("--model", model, "model checkpoint")->required();
  eval->add_option("--manifest", manifest, "dataset manifest")->required();
  eval->add_option("--split", split, "train, valid or test");

  auto* viz = app.add_subcommand("viz", "render the attention map of one slice");
  std::string slice;
  bool csv = false;
  add_common(viz, common);
  viz->add_option("--model", model, "model checkpoint")->required();
  viz->add_option("--slice", slice, "CTSL slice")->required();
  viz->add_flag("--csv", csv, "also write the 16x16 attention grid as CSV");

  auto* compare = app.add_subcommand("compare", "run conditions x modes over seeds and summarize");
  add_common(compare, common);
  compare->add_option("--manifest", manifest, "dataset manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    const std::filesystem::path out = common.out;
    if (gen->parsed()) {
      const auto c = cli::RunConfig::from(settings(common, {{"gen.task", task}}));
      cli::cmd_gen(c, out, print);
    } else if (pretrain->parsed()) {
      const auto c = cli::RunConfig::from(settings(common, {{"manifest", manifest}}));
      cli::cmd_pretrain(c, out, print);
    } else if (train->parsed()) {
      const auto c = cli::RunConfig::from(settings(
          common, {{"manifest", manifest}, {"condition", condition}, {"mil.mode", mode}, {"checkpoint", checkpoint}}));
      cli::cmd_train(c, out, print);
    } else if (eval->parsed()) {
      cli::RunConfig::from(settings(common, {}));
      const auto m = cli::cmd_eval(model, manifest, parse_split(split), out);
      std::cout << mil::eval_report_header() << '\n' << mil::eval_report_row(split, m) << '\n';
    } else if (viz->parsed()) {
      cli::RunConfig::from(settings(common, {}));
      const auto p = cli::cmd_viz(model, slice, out, csv);
      std::cout << "theta,predicted\n" << p.theta << ',' << p.predicted << '\n';
    } else if (compare->parsed()) {
      const auto c = cli::RunConfig::from(settings(common, {{"manifest", manifest}}));
      const auto r = cli::cmd_compare(c, out, print);
      std::cout << "condition,mode,seeds,acc,prec,rec,f1\n";
      for (const auto& s : r.summary)
        std::cout << cli::to_string(s.condition) << ',' << mil::to_string(s.mode) << ',' << s.seeds << ',' << s.acc
                  << ',' << s.prec << ',' << s.rec << ',' << s.f1 << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const nn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
