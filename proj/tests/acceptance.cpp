// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <type_traits>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "pairal/error.hpp"
#include "pairal/experiment.hpp"
#include "pairal/index.hpp"
#include "pairal/rng.hpp"

using namespace pairal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<UtteranceId> iota_ids(std::size_t n) {
  std::vector<UtteranceId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<UtteranceId>(i);
  return ids;
}

std::string printf_string(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

ModelConfig small_model(std::uint64_t seed = 0) {
  ModelConfig c;
  c.dim = 16;
  c.tokenizer.buckets = 4096;
  c.init_seed = seed;
  return c;
}

// Static cosine of every pair of a symmetric space.
std::unordered_map<PairKey, double, PairKeyHash> all_cosines(const EmbeddingModel& model,
                                                             const Corpus& corpus,
                                                             const PairSpace& space) {
  std::vector<Vector> emb;
  for (std::size_t i = 0; i < corpus.left_size(); ++i) {
    emb.push_back(normalized(model.embed(corpus.left_text(static_cast<UtteranceId>(i)))));
  }
  std::unordered_map<PairKey, double, PairKeyHash> out;
  space.for_each([&](PairKey k) { out[k] = dot(emb[k.a], emb[k.b]); });
  return out;
}

Outcome budget_schedule() {
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t ten = 0, four = 0;
  for (auto v : batch_sizes({2048, 3, 2, 10})) ten += v;
  for (auto v : batch_sizes({2048, 3, 2, 4})) four += v;
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return {ten == 232100 && four == 16640 && ms < 1.0,
          printf_string("sum(2048,3/2,10)=%llu sum(2048,3/2,4)=%llu in %.3f ms",
              static_cast<unsigned long long>(ten), static_cast<unsigned long long>(four), ms)};
}

Outcome estimator_unbiasedness() {
  auto data = gen_synthetic(20, 4, 120, SyntheticVocab{}, 31);  // 200 utterances
  const auto space = PairSpace::symmetric(iota_ids(data.corpus.left_size()));
  const auto model = EmbeddingModel::initialize(small_model());
  const auto cos = all_cosines(model, data.corpus, space);
  const PairScorer scorer = [&](PairKey k) { return cos.at(k); };

  auto pool = build_eval_pool(data.corpus, data.oracle, space, model, 2000, 500, 0);
  std::vector<double> scores;
  for (const auto& [k, s] : cos) scores.push_back(s);
  std::sort(scores.begin(), scores.end());

  bool ok = true;
  std::string detail;
  const int draws = 1000;
  for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const double gamma = scores[static_cast<std::size_t>(q * static_cast<double>(scores.size() - 1))];
    std::uint64_t exact = 0;
    for (const auto& [k, s] : cos) exact += (!data.oracle.label(k) && s >= gamma) ? 1 : 0;
    double sum = 0, sum_sq = 0;
    for (int d = 0; d < draws; ++d) {
      resample_random_negatives(pool, space, 500, mix_seed(0xfeed, static_cast<std::uint64_t>(d)));
      const double fp = counts_at_threshold(score_pool(pool, scorer), pool, gamma).fp_hat();
      sum += fp;
      sum_sq += fp * fp;
    }
    const double mean = sum / draws;
    const double se = std::sqrt(std::max(0.0, (sum_sq - draws * mean * mean) / (draws - 1)) / draws);
    const double z = se > 0 ? (mean - static_cast<double>(exact)) / se : 0.0;
    ok = ok && std::abs(mean - static_cast<double>(exact)) <= 3.0 * se + 1e-9;
    detail += printf_string(" q%.2f:exact=%llu z=%+.2f", q, static_cast<unsigned long long>(exact), z);
  }
  return {ok, "1000 draws, 200 utterances;" + detail};
}

Outcome exactness_degeneration() {
  double worst = 0.0;
  for (auto [clusters, distractors, seed] : {std::tuple{6, 36, 1}, std::tuple{15, 60, 2}, std::tuple{25, 100, 3}}) {
    auto data = gen_synthetic(clusters, 4, distractors, SyntheticVocab{}, seed);
    const auto space = PairSpace::symmetric(iota_ids(data.corpus.left_size()));
    auto model = EmbeddingModel::initialize(small_model(seed));
    model.set_bn_stats(0.2, 0.05);
    model.set_head(3.0, -1.0);
    const auto negatives = space.size() - data.oracle.positives_in(space).size();
    const auto pool = build_eval_pool(data.corpus, data.oracle, space, model, negatives, 100, 0);
    const double estimated =
        pr_curve(score_pool(pool, model, data.corpus, space), pool).average_precision;

    std::vector<double> pos, neg;
    space.for_each([&](PairKey k) {
      const double p = model.predict_prob(model.embed(data.corpus.left_text(k.a)),
                                          model.embed(data.corpus.left_text(k.b)));
      (data.oracle.label(k) ? pos : neg).push_back(p);
    });
    worst = std::max(worst, std::abs(estimated - oracle::step_sum_ap(pos, neg)));
  }
  return {worst < 1e-9, printf_string("max |AP_est - AP_exact| = %.3g over 60/120/200 utterances", worst)};
}

std::string random_text(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string text;
  for (std::size_t i = 0; i < len; ++i) text += (i ? " w" : "w") + std::to_string(rng.below(vocab));
  return text;
}

Outcome gradient_correctness() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c = small_model(static_cast<std::uint64_t>(trial));
    c.dim = 8;
    c.tokenizer.buckets = 64;
    c.init_scale = 0.5;
    auto model = EmbeddingModel::initialize(c);
    model.set_head(0.5 + 2.0 * rng.uniform(), rng.normal());
    std::vector<Example> batch;
    for (int i = 0; i < 5; ++i) {
      batch.push_back(make_example(model, random_text(rng, 25, 1, 6), random_text(rng, 25, 1, 6),
                                   static_cast<int>(rng.below(2))));
    }
    const auto g = batch_loss_and_grad(model, batch);
    const double h = 1e-3;
    double diff2 = 0, norm_a = 0, norm_n = 0;
    auto accumulate = [&](double analytic, const std::function<void(double)>& set, double x0) {
      set(x0 + h);
      const double up = batch_loss(model, batch);
      set(x0 - h);
      const double down = batch_loss(model, batch);
      set(x0);
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - analytic) * (numeric - analytic);
      norm_a += analytic * analytic;
      norm_n += numeric * numeric;
    };
    for (const auto& [bucket, grad] : g.rows) {
      for (std::size_t j = 0; j < model.dim(); ++j) {
        accumulate(grad[j], [&, b = bucket, j](double v) { model.mutable_row(b)[j] = v; },
                   model.row(bucket)[j]);
      }
    }
    const double w = model.weight(), b = model.bias();
    accumulate(g.d_weight, [&](double v) { model.set_head(v, b); }, w);
    accumulate(g.d_bias, [&](double v) { model.set_head(w, v); }, b);
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(norm_a), std::sqrt(norm_n)));
  }
  return {worst < 1e-4, printf_string("max relative error %.3g over 20 batches of 5", worst)};
}

Outcome retrieval_losslessness() {
  bool ok = true;
  std::size_t checked = 0;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto data = gen_synthetic(30, 4, 180, SyntheticVocab{}, seed);  // 300 utterances
    auto model = EmbeddingModel::initialize(small_model(seed));
    model.set_bn_stats(0.3, 0.04);
    model.set_head(2.0, 0.5);
    const auto space = PairSpace::symmetric(iota_ids(data.corpus.left_size()));
    const auto index = build_left_index(model, data.corpus, space);

    std::vector<Candidate> all;
    space.for_each([&](PairKey k) {
      const double c = dot(normalized(model.embed(data.corpus.left_text(k.a))),
                           normalized(model.embed(data.corpus.left_text(k.b))));
      all.push_back({k, c, model.probability_from_cosine(c)});
    });
    auto first = [&](std::size_t n, auto less) {
      auto items = all;
      std::sort(items.begin(), items.end(), less);
      std::set<PairKey> keys;
      for (std::size_t i = 0; i < n; ++i) keys.insert(items[i].key);
      return keys;
    };
    auto as_set = [](const auto& items) {
      std::set<PairKey> keys;
      for (const auto& c : items) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, PairKey>) keys.insert(c);
        else keys.insert(c.key);
      }
      return keys;
    };
    const auto cands = build_candidates(model, index, index, PairMode::kSymmetric, index.size(), {});
    ok = ok && cands.items.size() == space.size();
    for (std::size_t n : {10, 100, 1000}) {
      ok = ok && as_set(top_scoring(cands, n)) == first(n, higher_score);
      ok = ok && as_set(most_uncertain(cands, n)) == first(n, more_uncertain);
      ok = ok && as_set(select_seed(model, data.corpus, space, n, index.size())) == first(n, higher_score);
      checked += 3;
    }
  }
  return {ok, printf_string("%zu selections on 300-utterance instances equal brute force", checked)};
}

Outcome closure_correctness() {
  Rng rng(6);
  bool ok = true;
  std::uint64_t pairs = 0;
  for (int g = 0; g < 100; ++g) {
    const std::size_t n = 1 + rng.below(1000);
    const std::size_t m = rng.below(n + n / 2);
    std::vector<PairKey> edges;
    for (std::size_t e = 0; e < m; ++e) {
      const auto a = static_cast<UtteranceId>(rng.below(n));
      const auto b = static_cast<UtteranceId>(rng.below(n));
      if (a != b) edges.push_back(PairKey::canonical(a, b));
    }
    const auto oracle_uf = LabelOracle::symmetric(n, edges);
    const auto comp = oracle::bfs_components(n, edges);
    for (UtteranceId a = 0; a < n; ++a) {
      for (UtteranceId b = a + 1; b < n; ++b) {
        ok = ok && oracle_uf.label({a, b}) == (comp[a] == comp[b]);
      }
    }
    pairs += n * (n - 1) / 2;
  }
  return {ok, printf_string("100 graphs, %llu pair labels compared", static_cast<unsigned long long>(pairs))};
}

struct StrategyResult {
  double final_ap = 0;
  double positives = 0;
  std::vector<double> curve;   // mean test AP per round
  std::vector<double> labels;  // mean cumulative labels per round
};

std::map<Strategy, StrategyResult> g_ordering;
double g_ordering_cpu = 0;
std::uint64_t g_budget = 0;

void run_ordering_experiment() {
  const auto cfg = synthetic_config();
  const std::clock_t start = std::clock();
  const Experiment ex = prepare(cfg);
  for (auto v : batch_sizes(cfg.schedule)) g_budget += v;
  for (Strategy s : {Strategy::kUncertainty, Strategy::kAdaptiveRetrieval, Strategy::kStaticRetrieval,
                     Strategy::kRandom}) {
    StrategyResult r;
    for (std::uint64_t seed : cfg.seeds) {
      const auto cell = run_cell(cfg, ex, s, seed);
      const double n = static_cast<double>(cfg.seeds.size());
      r.final_ap += cell.test_curve.average_precision / n;
      r.positives += static_cast<double>(cell.state.positives()) / n;
      const auto& rounds = cell.state.rounds;
      r.curve.resize(rounds.size());
      r.labels.resize(rounds.size());
      for (std::size_t i = 0; i < rounds.size(); ++i) {
        for (const auto& [name, m] : rounds[i].metrics) {
          if (name == "test") r.curve[i] += m.average_precision / n;
        }
        r.labels[i] += static_cast<double>(rounds[i].cumulative_labels) / n;
      }
    }
    g_ordering[s] = r;
  }
  g_ordering_cpu = static_cast<double>(std::clock() - start) / CLOCKS_PER_SEC;
}

Outcome strategy_ordering() {
  run_ordering_experiment();
  const auto& u = g_ordering[Strategy::kUncertainty];
  const auto& a = g_ordering[Strategy::kAdaptiveRetrieval];
  const auto& s = g_ordering[Strategy::kStaticRetrieval];
  const auto& r = g_ordering[Strategy::kRandom];
  const bool ok = u.final_ap > s.final_ap && s.final_ap > r.final_ap && u.final_ap >= 0.9 * a.final_ap &&
                  u.positives >= 5 * s.positives && a.positives >= 5 * s.positives && g_ordering_cpu < 600;
  return {ok, printf_string("AP unc %.4f adapt %.4f static %.4f random %.4f; positives unc %.1f adapt %.1f "
                  "static %.1f random %.1f; %.0f s CPU",
                  u.final_ap, a.final_ap, s.final_ap, r.final_ap, u.positives, a.positives,
                  s.positives, r.positives, g_ordering_cpu)};
}

Outcome data_efficiency() {
  const auto& u = g_ordering[Strategy::kUncertainty];
  const double goal = g_ordering[Strategy::kStaticRetrieval].final_ap;
  for (std::size_t i = 0; i < u.curve.size(); ++i) {
    if (u.curve[i] >= goal) {
      return {2.0 * u.labels[i] <= static_cast<double>(g_budget),
              printf_string("uncertainty reaches static AP %.4f at %.0f of %llu labels", goal, u.labels[i],
                  static_cast<unsigned long long>(g_budget))};
    }
  }
  return {false, printf_string("uncertainty never reaches static AP %.4f", goal)};
}

Outcome output_refit() {
  Rng rng(99);
  ModelConfig c = small_model(3);
  c.dim = 8;
  c.tokenizer.buckets = 128;
  c.init_scale = 0.5;
  auto model = EmbeddingModel::initialize(c);
  std::vector<Example> examples;
  for (int i = 0; i < 200; ++i) {
    examples.push_back(make_example(model, random_text(rng, 12, 2, 6), random_text(rng, 12, 2, 6), 0));
  }
  const auto cos = example_cosines(model, examples);
  for (std::size_t i = 0; i < cos.size(); ++i) {
    examples[i].label = rng.uniform() < 1.0 / (1.0 + std::exp(-(5.0 * cos[i] - 1.0))) ? 1 : 0;
  }
  const auto report = refit_output_layer(model, examples);

  const auto st = standardize(cos);
  double mean = 0, var = 0;
  for (double v : st.values) mean += v;
  mean /= static_cast<double>(st.values.size());
  for (double v : st.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(st.values.size());

  std::vector<int> y;
  for (const auto& e : examples) y.push_back(e.label);
  // The oracle standardizes on its own.
  double m2 = 0, v2 = 0;
  for (double x : cos) m2 += x;
  m2 /= static_cast<double>(cos.size());
  for (double x : cos) v2 += (x - m2) * (x - m2);
  const double sd = std::sqrt(v2 / static_cast<double>(cos.size()));
  std::vector<double> z;
  for (double x : cos) z.push_back((x - m2) / sd);
  const auto [w, b] = oracle::newton_logistic(z, y);
  const double dw = std::abs(report.standardized_fit.weight - w);
  const double db = std::abs(report.standardized_fit.bias - b);
  const bool ok = dw < 1e-3 && db < 1e-3 && std::abs(mean) < 1e-12 && std::abs(var - 1.0) < 1e-12;
  return {ok, printf_string("|dw| %.2g |db| %.2g; standardized mean %.2g var-1 %.2g", dw, db, mean, var - 1.0)};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "pairal_acceptance_determinism";
  fs::remove_all(root);
  auto cfg = synthetic_config();
  cfg.synthetic_params.n_clusters = 20;
  cfg.synthetic_params.n_distractors = 280;
  cfg.schedule.n1 = 32;
  cfg.schedule.rounds = 3;
  cfg.strategies = {Strategy::kUncertainty, Strategy::kAdaptiveRetrieval, Strategy::kStaticRetrieval,
                    Strategy::kRandom, Strategy::kStratifiedMatch, Strategy::kStated};
  cfg.random_negatives = 2000;
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  for (const char* run : {"a", "b"}) {
    cfg.outdir = root / run;
    cmd_run(cfg);
  }
  std::cout.rdbuf(old);

  std::size_t compared = 0;
  bool ok = true;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "config.ini") continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    ok = ok && fs::exists(root / "b" / rel) && slurp(entry.path()) == slurp(root / "b" / rel);
    ++compared;
  }
  const bool has_logs = fs::exists(root / "a" / "uncertainty" / "0" / "run_log.jsonl") &&
                        fs::exists(root / "a" / "random" / "2" / "metrics.json");
  fs::remove_all(root);
  return {ok && has_logs && compared > 0, printf_string("%zu output files byte-identical across two runs", compared)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double wall_limit_s;  // 0: no wall-clock bound (criterion 1 and 7 time themselves)
  };
  const std::vector<Criterion> criteria{
      {"budget schedule", budget_schedule, 0},
      {"estimator unbiasedness", estimator_unbiasedness, 30},
      {"exactness degeneration", exactness_degeneration, 10},
      {"gradient correctness", gradient_correctness, 10},
      {"retrieval losslessness", retrieval_losslessness, 30},
      {"closure correctness", closure_correctness, 10},
      {"strategy ordering", strategy_ordering, 0},
      {"data efficiency", data_efficiency, 600},
      {"output-layer refit", output_refit, 5},
      {"determinism", determinism, 0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].run();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[i].wall_limit_s > 0 && secs >= criteria[i].wall_limit_s) {
      out.pass = false;
      out.detail += printf_string("; exceeded %.0f s", criteria[i].wall_limit_s);
    }
    std::printf("%s %2zu %-24s %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    failed += out.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
