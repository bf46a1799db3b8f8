#include <doctest.h>

#include <set>

#include "pairal/error.hpp"
#include "pairal/strategies.hpp"

using namespace pairal;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

std::uint64_t sum(const std::vector<std::uint64_t>& v) {
  std::uint64_t s = 0;
  for (auto x : v) s += x;
  return s;
}

struct World {
  SyntheticCorpus data = gen_synthetic(20, 4, 100, SyntheticVocab{}, 12);
  EmbeddingModel static_model = EmbeddingModel::initialize(model_config());
  PairSpace space = PairSpace::symmetric(ids());
  int evaluations = 0;

  static ModelConfig model_config() {
    ModelConfig c;
    c.dim = 16;
    c.tokenizer.buckets = 4096;
    return c;
  }
  std::vector<UtteranceId> ids() const {
    std::vector<UtteranceId> v(data.corpus.left_size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<UtteranceId>(i);
    return v;
  }
  RunContext context() {
    TrainConfig train;
    train.epochs = 1;
    RunContext ctx{data.corpus, data.oracle, space, static_model, train, 10, {}, &data.stated};
    ctx.evaluators.emplace_back("count", [this](const EmbeddingModel&) {
      ++evaluations;
      return EvalSummary{};
    });
    return ctx;
  }
};

ScheduleConfig small_schedule(std::size_t rounds = 3) {
  ScheduleConfig s;
  s.n1 = 20;
  s.rounds = rounds;
  return s;
}

}  // namespace

TEST_CASE("budget schedule constants") {
  const auto ten = batch_sizes({2048, 3, 2, 10});
  CHECK(ten == std::vector<std::uint64_t>{2048, 3072, 4608, 6912, 10368, 15552, 23328, 34992, 52488, 78732});
  CHECK(sum(ten) == 232100);
  CHECK(sum(batch_sizes({2048, 3, 2, 4})) == 16640);
  CHECK(batch_sizes({2048, 3, 2, 1}) == std::vector<std::uint64_t>{2048});
}

TEST_CASE("batch sizes floor the exact rational, not a running product") {
  const auto sizes = batch_sizes({5, 3, 2, 8});
  unsigned __int128 num = 1, den = 1;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    CHECK(sizes[i] == static_cast<std::uint64_t>(5 * num / den));
    num *= 3;
    den *= 2;
  }
  CHECK(sizes[1] == 7);
  CHECK(sizes[2] == 11);
  CHECK(sizes[3] == 16);
  CHECK(batch_sizes({3, 2, 1, 4}) == std::vector<std::uint64_t>{3, 6, 12, 24});
  CHECK(batch_sizes({7, 1, 1, 3}) == std::vector<std::uint64_t>{7, 7, 7});
}

TEST_CASE("invalid schedules are rejected") {
  CHECK(code_of([] { batch_sizes({0, 3, 2, 4}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { batch_sizes({8, 3, 2, 0}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { batch_sizes({8, 1, 2, 3}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { batch_sizes({1ULL << 40, 2, 1, 40}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("growth factor parsing") {
  CHECK(parse_growth("3/2") == std::pair<std::uint64_t, std::uint64_t>{3, 2});
  CHECK(parse_growth("2") == std::pair<std::uint64_t, std::uint64_t>{2, 1});
  for (const char* bad : {"", "x", "3/", "/2", "3/0", "1.5", "3/2/1"}) {
    CHECK(code_of([&] { parse_growth(bad); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("strategy names round trip") {
  for (auto s : {Strategy::kRandom, Strategy::kStaticRetrieval, Strategy::kAdaptiveRetrieval,
                 Strategy::kUncertainty, Strategy::kStratifiedMatch, Strategy::kStratifiedAllPos,
                 Strategy::kStated}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK(is_adaptive(Strategy::kUncertainty));
  CHECK(is_adaptive(Strategy::kAdaptiveRetrieval));
  CHECK_FALSE(is_adaptive(Strategy::kStaticRetrieval));
  CHECK(code_of([] { parse_strategy("greedy"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("active learning queries fresh pairs and records every round") {
  World w;
  const auto ctx = w.context();
  for (auto strategy : {Strategy::kUncertainty, Strategy::kAdaptiveRetrieval}) {
    w.evaluations = 0;
    const auto state = run_active_learning(ctx, small_schedule(), strategy, 4);
    REQUIRE(state.rounds.size() == 3);
    CHECK(w.evaluations == 3);
    CHECK(state.labeled.size() == 20 + 30 + 45);

    std::set<PairKey> seen;
    std::uint64_t positives = 0;
    for (const auto& l : state.labeled) {
      CHECK(seen.insert(l.key).second);
      CHECK(w.space.contains(l.key));
      CHECK(l.label == (w.data.oracle.label(l.key) ? 1 : 0));
      positives += static_cast<std::uint64_t>(l.label);
    }
    CHECK(state.positives() == positives);
    CHECK(state.rounds.back().cumulative_positives == positives);
    CHECK(state.rounds.back().cumulative_labels == state.labeled.size());
    for (std::size_t r = 0; r < state.rounds.size(); ++r) CHECK(state.rounds[r].round == static_cast<int>(r) + 1);

    // Round 1 is the static-retrieval seed set.
    const auto seed_set = select_seed(w.static_model, w.data.corpus, w.space, 20, 10);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(state.labeled[i].round == 1);
      CHECK(state.labeled[i].key == seed_set[i]);
    }
    CHECK(state.model.has_value());
  }
}

TEST_CASE("active learning is deterministic in its seed") {
  World w;
  const auto ctx = w.context();
  const auto a = run_active_learning(ctx, small_schedule(), Strategy::kUncertainty, 1);
  const auto b = run_active_learning(ctx, small_schedule(), Strategy::kUncertainty, 1);
  REQUIRE(a.labeled.size() == b.labeled.size());
  for (std::size_t i = 0; i < a.labeled.size(); ++i) {
    CHECK(a.labeled[i].key == b.labeled[i].key);
    CHECK(a.labeled[i].round == b.labeled[i].round);
  }
  CHECK(a.model->weight() == b.model->weight());
  CHECK(a.model->bias() == b.model->bias());
}

TEST_CASE("one round means seed set only") {
  World w;
  const auto ctx = w.context();
  const auto state = run_active_learning(ctx, small_schedule(1), Strategy::kUncertainty, 0);
  CHECK(state.rounds.size() == 1);
  CHECK(state.labeled.size() == 20);
  CHECK(w.evaluations == 1);
}

TEST_CASE("stated seeding uses the stated pairs and needs them") {
  World w;
  auto ctx = w.context();
  const auto state = run_active_learning(ctx, small_schedule(2), Strategy::kUncertainty, 0, SeedSource::kStated);
  CHECK(state.rounds[0].acquired == w.data.stated.pairs.size());
  ctx.stated_train = nullptr;
  CHECK(code_of([&] { run_active_learning(ctx, small_schedule(2), Strategy::kUncertainty, 0, SeedSource::kStated); }) ==
        ErrorCode::kMissingReference);
  CHECK(code_of([&] { run_active_learning(ctx, small_schedule(2), Strategy::kRandom, 0); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("single-class labels keep the static model") {
  World w;
  const auto ctx = w.context();
  std::vector<LabeledPair> negatives;
  w.space.for_each([&](PairKey k) {
    if (negatives.size() < 10 && !w.data.oracle.label(k)) negatives.push_back({k, 0, 1});
  });
  bool trained = true;
  const auto model = fit_model(ctx, negatives, 0, trained);
  CHECK_FALSE(trained);
  CHECK(model.weight() == w.static_model.weight());
}

TEST_CASE("baselines: prefixes, checkpoints and oracle stratification") {
  World w;
  const auto ctx = w.context();
  const std::vector<std::uint64_t> checkpoints{20, 50, 95};

  SUBCASE("random") {
    const auto state = run_baseline(ctx, 95, Strategy::kRandom, 3, checkpoints);
    CHECK(state.labeled.size() == 95);
    REQUIRE(state.rounds.size() == 3);
    CHECK(state.rounds[0].cumulative_labels == 20);
    CHECK(state.rounds[1].cumulative_labels == 50);
    CHECK(w.evaluations == 3);
    const auto smaller = run_baseline(ctx, 50, Strategy::kRandom, 3);
    for (std::size_t i = 0; i < 50; ++i) CHECK(smaller.labeled[i].key == state.labeled[i].key);
    std::set<PairKey> unique;
    for (const auto& l : state.labeled) unique.insert(l.key);
    CHECK(unique.size() == 95);
  }
  SUBCASE("static retrieval") {
    const auto state = run_baseline(ctx, 95, Strategy::kStaticRetrieval, 0, checkpoints);
    const auto top = select_seed(w.static_model, w.data.corpus, w.space, 95, 10);
    for (std::size_t i = 0; i < 95; ++i) CHECK(state.labeled[i].key == top[i]);
  }
  SUBCASE("stated") {
    const auto state = run_baseline(ctx, 95, Strategy::kStated, 0);
    CHECK(state.labeled.size() == w.data.stated.pairs.size());
    CHECK(state.rounds.size() == 1);
  }
  SUBCASE("stratified") {
    CHECK(code_of([&] { run_baseline(ctx, 95, Strategy::kStratifiedMatch, 0); }) ==
          ErrorCode::kMissingReference);
    const auto match = run_baseline(ctx, 95, Strategy::kStratifiedMatch, 0, {}, ReferenceCounts{7, 40});
    CHECK(match.labeled.size() == 47);
    CHECK(match.positives() == 7);

    const auto all_positives = w.data.oracle.positives_in(w.space).size();
    const auto allpos = run_baseline(ctx, 400, Strategy::kStratifiedAllPos, 0);
    CHECK(allpos.positives() == all_positives);
    CHECK(allpos.labeled.size() == 400);
  }
  CHECK(code_of([&] { run_baseline(ctx, 10, Strategy::kUncertainty, 0); }) == ErrorCode::kInvalidArgument);
}
