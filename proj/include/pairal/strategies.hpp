#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pairal/corpus.hpp"
#include "pairal/embed.hpp"
#include "pairal/eval.hpp"

namespace pairal {

// Round i queries floor(n1 * (growth_num / growth_den)^(i-1)) labels.
struct ScheduleConfig {
  std::uint64_t n1 = 2048;
  std::uint64_t growth_num = 3;
  std::uint64_t growth_den = 2;
  std::size_t rounds = 10;
};

// Parses "3/2" or "2".
std::pair<std::uint64_t, std::uint64_t> parse_growth(std::string_view text);

// Exact rational arithmetic; throws on overflow.
std::vector<std::uint64_t> batch_sizes(const ScheduleConfig& schedule);

enum class Strategy {
  kRandom,
  kStaticRetrieval,
  kAdaptiveRetrieval,
  kUncertainty,
  kStratifiedMatch,
  kStratifiedAllPos,
  kStated,
};

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);
bool is_adaptive(Strategy strategy);

struct LabeledPair {
  PairKey key;
  int label = 0;
  int round = 0;
};

struct RoundRecord {
  int round = 0;
  std::uint64_t requested = 0;
  std::uint64_t acquired = 0;
  std::uint64_t positives_in_batch = 0;
  std::uint64_t cumulative_positives = 0;
  std::uint64_t cumulative_labels = 0;
  // False when the labels so far are single-class; the static model stands in.
  bool trained = false;
  std::vector<std::pair<std::string, EvalSummary>> metrics;
};

struct RunState {
  Strategy strategy = Strategy::kUncertainty;
  std::uint64_t seed = 0;
  std::vector<LabeledPair> labeled;
  std::vector<RoundRecord> rounds;
  std::optional<EmbeddingModel> model;
  bool stopped_early = false;

  std::uint64_t positives() const;
};

using Evaluator = std::function<EvalSummary(const EmbeddingModel&)>;

// Read-only inputs shared by every strategy run on one training pool.
struct RunContext {
  const Corpus& corpus;
  const LabelOracle& oracle;
  PairSpace train_space;
  const EmbeddingModel& static_model;
  TrainConfig train;
  std::size_t m = 1000;
  // Named evaluators applied to the model after every round ("dev", "test").
  std::vector<std::pair<std::string, Evaluator>> evaluators;
  // Stated training pairs, for the STATED baseline and stated seeding.
  const StatedDataset* stated_train = nullptr;
};

// Top-n1 pairs of the space by static-model score among the m-NN candidates.
std::vector<PairKey> select_seed(const EmbeddingModel& static_model, const Corpus& corpus,
                                 const PairSpace& space, std::uint64_t n1, std::size_t m);

// Fresh copy of the static model trained on `labeled` then refit. Returns the
// untrained static model (and trained=false) for single-class data.
EmbeddingModel fit_model(const RunContext& context, std::span<const LabeledPair> labeled,
                         std::uint64_t seed, bool& trained);

enum class SeedSource { kStaticRetrieval, kStated };

// Round 1 is the seed set; each later round retrains on every label so far and
// queries the n_i most uncertain (or highest scoring) unlabeled candidates.
RunState run_active_learning(const RunContext& context, const ScheduleConfig& schedule,
                             Strategy strategy, std::uint64_t seed,
                             SeedSource seed_source = SeedSource::kStaticRetrieval);

struct ReferenceCounts {
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

// Non-adaptive data collection. For RANDOM and STATIC_RETRIEVAL the labeled
// list is ordered so every prefix is itself a valid run of that size; the
// model is evaluated at each budget in `checkpoints` (the final budget is
// always evaluated).
RunState run_baseline(const RunContext& context, std::uint64_t budget, Strategy kind,
                      std::uint64_t seed, std::span<const std::uint64_t> checkpoints = {},
                      std::optional<ReferenceCounts> reference = std::nullopt);

}  // namespace pairal
