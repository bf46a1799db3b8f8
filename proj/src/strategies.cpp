#include "pairal/strategies.hpp"

#include <algorithm>
#include <charconv>

#include <boost/multiprecision/cpp_int.hpp>
#include <spdlog/spdlog.h>

#include "pairal/error.hpp"
#include "pairal/index.hpp"
#include "pairal/rng.hpp"

namespace pairal {

std::pair<std::uint64_t, std::uint64_t> parse_growth(std::string_view text) {
  auto parse = [&](std::string_view part) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v == 0) {
      throw Error(ErrorCode::kInvalidArgument, "bad growth factor '" + std::string(text) + "'");
    }
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return {parse(text), 1};
  return {parse(text.substr(0, slash)), parse(text.substr(slash + 1))};
}

std::vector<std::uint64_t> batch_sizes(const ScheduleConfig& schedule) {
  using boost::multiprecision::cpp_int;
  if (schedule.n1 < 1 || schedule.rounds < 1) {
    throw Error(ErrorCode::kInvalidArgument, "schedule needs n1 >= 1 and rounds >= 1");
  }
  if (schedule.growth_den == 0 || schedule.growth_num < schedule.growth_den) {
    throw Error(ErrorCode::kInvalidArgument, "growth factor must be >= 1");
  }
  std::vector<std::uint64_t> sizes;
  cpp_int num = schedule.n1;
  cpp_int den = 1;
  for (std::size_t i = 0; i < schedule.rounds; ++i) {
    const cpp_int n = num / den;
    if (n > cpp_int(std::numeric_limits<std::uint64_t>::max())) {
      throw Error(ErrorCode::kInvalidArgument, "batch size overflows 64 bits");
    }
    sizes.push_back(n.convert_to<std::uint64_t>());
    num *= schedule.growth_num;
    den *= schedule.growth_den;
  }
  return sizes;
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kRandom: return "random";
    case Strategy::kStaticRetrieval: return "static_retrieval";
    case Strategy::kAdaptiveRetrieval: return "adaptive_retrieval";
    case Strategy::kUncertainty: return "uncertainty";
    case Strategy::kStratifiedMatch: return "stratified_match";
    case Strategy::kStratifiedAllPos: return "stratified_allpos";
    case Strategy::kStated: return "stated";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  for (auto s : {Strategy::kRandom, Strategy::kStaticRetrieval, Strategy::kAdaptiveRetrieval,
                 Strategy::kUncertainty, Strategy::kStratifiedMatch, Strategy::kStratifiedAllPos,
                 Strategy::kStated}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(text) + "'");
}

bool is_adaptive(Strategy strategy) {
  return strategy == Strategy::kUncertainty || strategy == Strategy::kAdaptiveRetrieval;
}

std::uint64_t RunState::positives() const {
  return static_cast<std::uint64_t>(
      std::count_if(labeled.begin(), labeled.end(), [](const LabeledPair& p) { return p.label == 1; }));
}

namespace {

CandidateSet candidates_for(const EmbeddingModel& model, const Corpus& corpus,
                            const PairSpace& space, std::size_t m, const PairSet& exclude,
                            int round) {
  const auto left = build_left_index(model, corpus, space);
  if (space.mode() == PairMode::kSymmetric) {
    return build_candidates(model, left, left, space.mode(), std::min(m, left.size()), exclude, round);
  }
  const auto right = build_right_index(model, corpus, space);
  return build_candidates(model, left, right, space.mode(), std::min(m, right.size()), exclude, round);
}

std::vector<PairKey> keys_of(const std::vector<Candidate>& picked) {
  std::vector<PairKey> keys;
  keys.reserve(picked.size());
  for (const auto& c : picked) keys.push_back(c.key);
  return keys;
}

void evaluate_into(const RunContext& context, const EmbeddingModel& model, RoundRecord& record) {
  for (const auto& [name, evaluate] : context.evaluators) record.metrics.emplace_back(name, evaluate(model));
}

}  // namespace

std::vector<PairKey> select_seed(const EmbeddingModel& static_model, const Corpus& corpus,
                                 const PairSpace& space, std::uint64_t n1, std::size_t m) {
  const auto candidates = candidates_for(static_model, corpus, space, m, {}, 1);
  if (n1 > candidates.items.size()) {
    spdlog::warn("seed set: pool of {} is smaller than n1={}; returning the pool",
                 candidates.items.size(), n1);
    n1 = candidates.items.size();
  }
  return keys_of(top_scoring(candidates, static_cast<std::size_t>(n1)));
}

EmbeddingModel fit_model(const RunContext& context, std::span<const LabeledPair> labeled,
                         std::uint64_t seed, bool& trained) {
  std::vector<Example> examples;
  examples.reserve(labeled.size());
  bool pos = false, neg = false;
  for (const auto& p : labeled) {
    examples.push_back(make_example(context.static_model, context.corpus.left_text(p.key.a),
                                    context.corpus.right_text(p.key.b), p.label));
    (p.label == 1 ? pos : neg) = true;
  }
  EmbeddingModel model = context.static_model;
  trained = pos && neg && examples.size() >= 2;
  if (!trained) {
    spdlog::warn("labeled data ({} pairs) is single-class; keeping the static model", labeled.size());
    return model;
  }
  TrainConfig config = context.train;
  config.seed = seed;
  train(model, examples, config);
  refit_output_layer(model, examples);
  return model;
}

RunState run_active_learning(const RunContext& context, const ScheduleConfig& schedule,
                             Strategy strategy, std::uint64_t seed, SeedSource seed_source) {
  if (!is_adaptive(strategy)) {
    throw Error(ErrorCode::kInvalidArgument,
                "run_active_learning expects uncertainty or adaptive_retrieval");
  }
  const auto sizes = batch_sizes(schedule);
  RunState state;
  state.strategy = strategy;
  state.seed = seed;

  PairSet labeled_keys;
  std::uint64_t cumulative_positives = 0;
  auto query = [&](std::span<const PairKey> batch, int round, std::uint64_t requested) {
    RoundRecord record;
    record.round = round;
    record.requested = requested;
    for (const auto& key : batch) {
      if (!labeled_keys.insert(key).second) {
        throw Error(ErrorCode::kInvalidArgument, "pair queried twice");
      }
      const int label = context.oracle.label(key) ? 1 : 0;
      state.labeled.push_back({key, label, round});
      record.positives_in_batch += static_cast<std::uint64_t>(label);
    }
    cumulative_positives += record.positives_in_batch;
    record.acquired = batch.size();
    record.cumulative_positives = cumulative_positives;
    record.cumulative_labels = state.labeled.size();
    return record;
  };

  std::vector<PairKey> seed_batch;
  std::uint64_t seed_requested = sizes[0];
  if (seed_source == SeedSource::kStated) {
    if (context.stated_train == nullptr) {
      throw Error(ErrorCode::kMissingReference, "stated seeding needs the stated training data");
    }
    for (const auto& p : context.stated_train->pairs) seed_batch.push_back(p.key);
    seed_requested = seed_batch.size();
  } else {
    seed_batch = select_seed(context.static_model, context.corpus, context.train_space, sizes[0],
                             context.m);
  }

  RoundRecord first = query(seed_batch, 1, seed_requested);
  EmbeddingModel model = fit_model(context, state.labeled, mix_seed(seed, 1), first.trained);
  evaluate_into(context, model, first);
  state.rounds.push_back(std::move(first));

  for (std::size_t i = 1; i < sizes.size(); ++i) {
    const int round = static_cast<int>(i) + 1;
    const auto candidates =
        candidates_for(model, context.corpus, context.train_space, context.m, labeled_keys, round);
    if (candidates.items.empty()) {
      spdlog::warn("round {}: candidate pool exhausted; stopping early", round);
      state.stopped_early = true;
      break;
    }
    const auto picked = strategy == Strategy::kUncertainty
                            ? most_uncertain(candidates, static_cast<std::size_t>(sizes[i]))
                            : top_scoring(candidates, static_cast<std::size_t>(sizes[i]));
    RoundRecord record = query(keys_of(picked), round, sizes[i]);
    model = fit_model(context, state.labeled, mix_seed(seed, round), record.trained);
    evaluate_into(context, model, record);
    state.rounds.push_back(std::move(record));
  }
  state.model = std::move(model);
  return state;
}

RunState run_baseline(const RunContext& context, std::uint64_t budget, Strategy kind,
                      std::uint64_t seed, std::span<const std::uint64_t> checkpoints,
                      std::optional<ReferenceCounts> reference) {
  const PairSpace& space = context.train_space;
  std::vector<PairKey> keys;
  bool prefix_valid = false;
  switch (kind) {
    case Strategy::kRandom:
      keys = sample_random_pairs(space, budget, {}, mix_seed(seed, 0x72616e64ULL));
      prefix_valid = true;
      break;
    case Strategy::kStaticRetrieval:
      keys = select_seed(context.static_model, context.corpus, space, budget, context.m);
      prefix_valid = true;
      break;
    case Strategy::kStated:
      if (context.stated_train == nullptr) {
        throw Error(ErrorCode::kMissingReference, "stated baseline needs the stated training data");
      }
      for (const auto& p : context.stated_train->pairs) keys.push_back(p.key);
      break;
    case Strategy::kStratifiedMatch:
    case Strategy::kStratifiedAllPos: {
      // Oracle information: uniform access to every positive of the pool.
      auto positives = context.oracle.positives_in(space);
      Rng rng(mix_seed(seed, 0x7374726174ULL));
      rng.shuffle(std::span(positives));
      std::uint64_t n_pos = positives.size();
      std::uint64_t n_neg = 0;
      if (kind == Strategy::kStratifiedMatch) {
        if (!reference) {
          throw Error(ErrorCode::kMissingReference, "stratified_match needs reference label counts");
        }
        if (reference->positives > positives.size()) {
          spdlog::warn("stratified_match: reference wants {} positives, pool has {}",
                       reference->positives, positives.size());
        }
        n_pos = std::min<std::uint64_t>(reference->positives, positives.size());
        n_neg = reference->negatives;
      } else {
        n_neg = budget > n_pos ? budget - n_pos : 0;
      }
      positives.resize(static_cast<std::size_t>(n_pos));
      const PairSet all_positive_keys = [&] {
        const auto all = context.oracle.positives_in(space);
        return PairSet(all.begin(), all.end());
      }();
      keys = positives;
      for (const auto& k : sample_random_pairs(space, n_neg, all_positive_keys, mix_seed(seed, 0x6e6567ULL))) {
        keys.push_back(k);
      }
      break;
    }
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "run_baseline does not handle " + std::string(to_string(kind)));
  }

  RunState state;
  state.strategy = kind;
  state.seed = seed;
  for (const auto& key : keys) state.labeled.push_back({key, context.oracle.label(key) ? 1 : 0, 1});

  std::vector<std::uint64_t> stops;
  if (prefix_valid) {
    for (auto c : checkpoints) {
      if (c > 0 && c < keys.size()) stops.push_back(c);
    }
  }
  stops.push_back(keys.size());
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  std::uint64_t previous = 0;
  std::uint64_t cumulative_positives = 0;
  EmbeddingModel model = context.static_model;
  for (std::size_t r = 0; r < stops.size(); ++r) {
    RoundRecord record;
    record.round = static_cast<int>(r) + 1;
    record.requested = stops[r] - previous;
    record.acquired = record.requested;
    for (std::uint64_t k = previous; k < stops[r]; ++k) {
      state.labeled[k].round = record.round;
      record.positives_in_batch += static_cast<std::uint64_t>(state.labeled[k].label);
    }
    cumulative_positives += record.positives_in_batch;
    record.cumulative_positives = cumulative_positives;
    record.cumulative_labels = stops[r];
    model = fit_model(context, std::span(state.labeled).first(stops[r]),
                      mix_seed(seed, record.round), record.trained);
    evaluate_into(context, model, record);
    state.rounds.push_back(std::move(record));
    previous = stops[r];
  }
  state.model = std::move(model);
  return state;
}

}  // namespace pairal
