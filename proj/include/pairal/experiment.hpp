#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pairal/corpus.hpp"
#include "pairal/embed.hpp"
#include "pairal/eval.hpp"
#include "pairal/strategies.hpp"

namespace pairal {

struct SyntheticParams {
  std::size_t n_clusters = 50;
  std::size_t cluster_size = 4;
  std::size_t n_distractors = 1800;
  SyntheticVocab vocab;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  // Corpus: TSV files, or the synthetic generator when `synthetic` is set.
  bool synthetic = false;
  std::filesystem::path utterances;
  std::filesystem::path pairs;
  PairMode mode = PairMode::kSymmetric;
  SyntheticParams synthetic_params;

  std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;

  ScheduleConfig schedule;
  std::size_t m = 1000;
  SeedSource seed_source = SeedSource::kStaticRetrieval;
  std::vector<Strategy> strategies{Strategy::kUncertainty, Strategy::kAdaptiveRetrieval,
                                   Strategy::kStaticRetrieval, Strategy::kRandom};

  ModelConfig model;
  TrainConfig train;

  std::size_t near_per_utterance = 10;
  std::size_t random_negatives = 20000;
  std::uint64_t eval_seed = 0;
  // Evaluate on the dev pool after every round as well as the test pool.
  bool eval_dev = true;

  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path outdir = "runs";
};

// Defaults for file corpora: seed set of 2048, growth 3/2, 10 rounds, m = 1000.
ExperimentConfig default_config();
// Desk-scale preset for the synthetic corpus (2,000 utterances): n1 = 64,
// 6 rounds, m = 20, 128-dim embeddings, 4 epochs of batch 32 at lr 3e-3.
ExperimentConfig synthetic_config();

// INI-style file with sections [corpus] [synthetic] [split] [schedule]
// [strategies] [model] [train] [eval] [run]. Keys absent from the file keep
// the values already in `config`.
void load_config(const std::filesystem::path& path, ExperimentConfig& config);
void load_config(std::istream& in, ExperimentConfig& config);
void write_config(std::ostream& out, const ExperimentConfig& config);
// Throws INVALID_ARGUMENT on an unusable config (missing files, no seeds, ...).
void validate(const ExperimentConfig& config);

// Everything a (strategy, seed) cell reads but never modifies.
struct Experiment {
  Corpus corpus;
  StatedDataset stated;
  LabelOracle oracle;
  SplitSpec split;
  EmbeddingModel static_model;
  EvalPool dev_pool;
  EvalPool test_pool;
  std::uint64_t fingerprint = 0;
};

Experiment prepare(const ExperimentConfig& config);

EvalSummary evaluate(const Experiment& experiment, const EvalPool& pool, Split split,
                     const EmbeddingModel& model, PRCurve* curve = nullptr);

struct CellResult {
  Strategy strategy = Strategy::kUncertainty;
  std::uint64_t seed = 0;
  RunState state;
  PRCurve test_curve;  // final model
};

RunContext make_context(const ExperimentConfig& config, const Experiment& experiment,
                        const StatedDataset& stated_train);

CellResult run_cell(const ExperimentConfig& config, const Experiment& experiment, Strategy strategy,
                    std::uint64_t seed, std::optional<ReferenceCounts> reference = std::nullopt);

// Writes run_log.jsonl, labeled.tsv, model.ckpt, metrics.csv, metrics.json.
void write_cell(const std::filesystem::path& dir, const CellResult& cell);

// Full pipeline over every (strategy, seed); returns the process exit code.
int cmd_run(const ExperimentConfig& config);

// Writes the generated corpus as utterances.tsv and pairs.tsv.
int cmd_gen(const SyntheticParams& params, const std::filesystem::path& outdir);

struct EvalRequest {
  std::filesystem::path checkpoint;
  Split split = Split::kTest;
  std::optional<ManualAdjustment> adjustment;
  std::filesystem::path outdir;
};
int cmd_eval(const ExperimentConfig& config, const EvalRequest& request);

// One strategy's learning curve averaged over seeds.
struct StrategyCurve {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<double> labels;           // mean cumulative labels per round
  std::vector<double> mean_ap;          // mean test AP per round
  std::vector<double> mean_positives;   // mean cumulative positives per round
  std::vector<std::vector<double>> ap;  // [seed][round]
};

// Labels the target needs to first reach the baseline's final mean AP;
// nullopt when it never does.
std::optional<double> labels_to_match(const StrategyCurve& target, const StrategyCurve& baseline);
// baseline final budget / labels the target needs.
std::optional<double> efficiency_ratio(const StrategyCurve& target, const StrategyCurve& baseline);

// Reads summary.json of each run directory; throws CORPUS_MISMATCH when the
// runs were made on different corpora.
std::vector<StrategyCurve> read_curves(const std::vector<std::filesystem::path>& run_dirs);
int cmd_report(const std::vector<std::filesystem::path>& run_dirs,
               const std::filesystem::path& outdir);

}  // namespace pairal
