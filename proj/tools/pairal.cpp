// pairal: active learning for imbalanced pairwise tasks.
//   pairal gen    --out DIR
//   pairal run    [--synthetic] [--config FILE] [overrides...]
//   pairal eval   --config FILE --checkpoint model.ckpt [--p-near P --p-rand P]
//   pairal report RUN_DIR... --out DIR

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "pairal/experiment.hpp"

namespace {

using namespace pairal;

struct Overrides {
  std::optional<std::string> outdir;
  std::optional<std::string> utterances, pairs, mode;
  std::optional<std::string> seeds, strategies, growth;
  std::optional<std::uint64_t> n1;
  std::optional<std::size_t> rounds, m, epochs, batch_size;
  std::optional<double> learning_rate;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--outdir", o.outdir, "Output directory");
  app->add_option("--utterances", o.utterances, "Utterance TSV");
  app->add_option("--pairs", o.pairs, "Pair TSV");
  app->add_option("--mode", o.mode, "symmetric or bipartite");
  app->add_option("--seeds", o.seeds, "Comma-separated run seeds");
  app->add_option("--strategies", o.strategies, "Comma-separated strategies");
  app->add_option("--n1", o.n1, "Seed set size");
  app->add_option("--growth", o.growth, "Batch growth factor, e.g. 3/2");
  app->add_option("-k,--rounds", o.rounds, "Number of rounds");
  app->add_option("-m", o.m, "Neighbors per utterance for candidate retrieval");
  app->add_option("--epochs", o.epochs, "Training epochs per round");
  app->add_option("--batch-size", o.batch_size, "Training batch size");
  app->add_option("--lr", o.learning_rate, "Learning rate");
}

std::string ini_of(const Overrides& o) {
  std::string ini;
  auto section = [&](const char* name) { ini += std::string("[") + name + "]\n"; };
  auto kv = [&](const char* k, const std::string& v) { ini += std::string(k) + " = " + v + "\n"; };
  section("corpus");
  if (o.utterances) kv("utterances", *o.utterances);
  if (o.pairs) kv("pairs", *o.pairs);
  if (o.mode) kv("mode", *o.mode);
  section("schedule");
  if (o.n1) kv("n1", std::to_string(*o.n1));
  if (o.growth) kv("growth", *o.growth);
  if (o.rounds) kv("rounds", std::to_string(*o.rounds));
  if (o.m) kv("m", std::to_string(*o.m));
  section("strategies");
  if (o.strategies) kv("list", *o.strategies);
  section("train");
  if (o.epochs) kv("epochs", std::to_string(*o.epochs));
  if (o.batch_size) kv("batch_size", std::to_string(*o.batch_size));
  section("run");
  if (o.seeds) kv("seeds", *o.seeds);
  if (o.outdir) kv("outdir", *o.outdir);
  return ini;
}

ExperimentConfig resolve(bool synthetic_flag, const std::string& config_path, const Overrides& o) {
  bool synthetic = synthetic_flag;
  if (!config_path.empty()) {
    ExperimentConfig peek;
    load_config(config_path, peek);
    synthetic = synthetic || peek.synthetic;
  }
  ExperimentConfig config = synthetic ? synthetic_config() : default_config();
  if (!config_path.empty()) load_config(config_path, config);
  config.synthetic = synthetic;
  std::istringstream flags(ini_of(o));
  load_config(flags, config);
  if (o.learning_rate) config.train.learning_rate = *o.learning_rate;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pool-based active learning for extremely imbalanced pairwise classification"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  SyntheticParams gen_params;
  std::string gen_out = "corpus";
  auto* gen = app.add_subcommand("gen", "Write a synthetic corpus as TSV files");
  gen->add_option("--clusters", gen_params.n_clusters, "Number of paraphrase clusters");
  gen->add_option("--cluster-size", gen_params.cluster_size, "Utterances per cluster");
  gen->add_option("--distractors", gen_params.n_distractors, "Singleton utterances");
  gen->add_option("--seed", gen_params.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");

  bool run_synthetic = false;
  std::string run_config;
  Overrides run_overrides;
  auto* run = app.add_subcommand("run", "Run every (strategy, seed) cell of an experiment");
  run->add_flag("--synthetic", run_synthetic, "Use the built-in synthetic corpus");
  run->add_option("--config", run_config, "INI config file")->check(CLI::ExistingFile);
  add_overrides(run, run_overrides);

  bool eval_synthetic = false;
  std::string eval_config;
  Overrides eval_overrides;
  EvalRequest request;
  std::string eval_split = "test", eval_checkpoint, eval_out;
  std::optional<double> p_near, p_rand;
  auto* eval = app.add_subcommand("eval", "Evaluate a model checkpoint on the dev or test pool");
  eval->add_flag("--synthetic", eval_synthetic, "Use the built-in synthetic corpus");
  eval->add_option("--config", eval_config, "INI config file")->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "dev or test");
  eval->add_option("--p-near", p_near, "Fraction of near false positives that are real")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--p-rand", p_rand, "Fraction of random false positives that are real")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--out", eval_out, "Output directory (default: print JSON)");
  add_overrides(eval, eval_overrides);

  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "Learning curves and strategy comparison");
  report->add_option("run_dirs", report_dirs, "Run output directories")->required();
  report->add_option("--out", report_out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen) return cmd_gen(gen_params, gen_out);
    if (*run) return cmd_run(resolve(run_synthetic, run_config, run_overrides));
    if (*eval) {
      request.checkpoint = eval_checkpoint;
      request.split = parse_split(eval_split);
      request.outdir = eval_out;
      if (p_near || p_rand) request.adjustment = ManualAdjustment{p_near.value_or(1.0), p_rand.value_or(1.0)};
      return cmd_eval(resolve(eval_synthetic, eval_config, eval_overrides), request);
    }
    if (*report) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      return cmd_report(dirs, report_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
