#include "pairal/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>

#include <spdlog/spdlog.h>

#include "pairal/error.hpp"
#include "pairal/index.hpp"

namespace pairal {

double EvalPool::random_weight() const {
  if (random_negatives.empty()) return 0.0;
  return static_cast<double>(w_random) / static_cast<double>(random_negatives.size());
}

namespace {

void check_estimator(const EvalPool& pool) {
  if (pool.random_negatives.empty() && pool.w_random > 0) {
    throw Error(ErrorCode::kEstimatorUndefined,
                "D_random is empty but stands for " + std::to_string(pool.w_random) + " negatives");
  }
}

PairSet pool_exclusions(const EvalPool& pool) {
  PairSet exclude(pool.positives.begin(), pool.positives.end());
  exclude.insert(pool.near_negatives.begin(), pool.near_negatives.end());
  return exclude;
}

}  // namespace

EvalPool build_eval_pool(const Corpus& corpus, const LabelOracle& oracle, const PairSpace& space,
                         const EmbeddingModel& static_model, std::size_t near_size,
                         std::size_t random_size, std::uint64_t seed) {
  EvalPool pool;
  pool.space_size = space.size();
  pool.positives = oracle.positives_in(space);
  const std::uint64_t negatives = pool.space_size - pool.positives.size();
  near_size = static_cast<std::size_t>(std::min<std::uint64_t>(near_size, negatives));

  if (near_size > 0) {
    // A pair in the global top-K negatives has fewer than K negatives plus the
    // left utterance's positives ahead of it in that utterance's neighbor list.
    const std::size_t m = near_size + oracle.max_positive_degree(space);
    const auto left = build_left_index(static_model, corpus, space);
    CandidateSet candidates;
    if (space.mode() == PairMode::kSymmetric) {
      candidates = build_candidates(static_model, left, left, space.mode(),
                                    std::min(m, left.size()), {});
    } else {
      const auto right = build_right_index(static_model, corpus, space);
      candidates = build_candidates(static_model, left, right, space.mode(),
                                    std::min(m, right.size()), {});
    }
    std::vector<Candidate> negatives_only;
    for (const auto& c : candidates.items) {
      if (!oracle.label(c.key)) negatives_only.push_back(c);
    }
    const std::size_t keep = std::min(near_size, negatives_only.size());
    std::partial_sort(negatives_only.begin(), negatives_only.begin() + static_cast<std::ptrdiff_t>(keep),
                      negatives_only.end(), [](const Candidate& x, const Candidate& y) {
                        if (x.cosine != y.cosine) return x.cosine > y.cosine;
                        return x.key < y.key;
                      });
    for (std::size_t i = 0; i < keep; ++i) pool.near_negatives.push_back(negatives_only[i].key);
  }

  pool.w_random = negatives - pool.near_negatives.size();
  resample_random_negatives(pool, space, random_size, seed);
  return pool;
}

void resample_random_negatives(EvalPool& pool, const PairSpace& space, std::size_t random_size,
                               std::uint64_t seed) {
  if (random_size > pool.w_random) {
    spdlog::warn("eval pool: random_size {} exceeds the {} remaining negatives; clamping",
                 random_size, pool.w_random);
    random_size = static_cast<std::size_t>(pool.w_random);
  }
  pool.random_negatives = sample_random_pairs(space, random_size, pool_exclusions(pool), seed);
}

PoolScores score_pool(const EvalPool& pool, const PairScorer& score) {
  PoolScores out;
  for (const auto& k : pool.positives) out.positives.push_back(score(k));
  for (const auto& k : pool.near_negatives) out.near.push_back(score(k));
  for (const auto& k : pool.random_negatives) out.random.push_back(score(k));
  return out;
}

PoolScores score_pool(const EvalPool& pool, const EmbeddingModel& model, const Corpus& corpus,
                      const PairSpace& space) {
  const auto left = build_left_index(model, corpus, space);
  if (space.mode() == PairMode::kSymmetric) {
    return score_pool(pool, [&](PairKey k) {
      return model.probability_from_cosine(
          dot(left.vector_at(*left.position(k.a)), left.vector_at(*left.position(k.b))));
    });
  }
  const auto right = build_right_index(model, corpus, space);
  return score_pool(pool, [&](PairKey k) {
    return model.probability_from_cosine(
        dot(left.vector_at(*left.position(k.a)), right.vector_at(*right.position(k.b))));
  });
}

ThresholdCounts counts_at_threshold(const PoolScores& scores, const EvalPool& pool, double gamma) {
  check_estimator(pool);
  ThresholdCounts c;
  c.random_weight = pool.random_weight();
  for (double s : scores.positives) (s >= gamma ? c.tp : c.fn) += 1;
  for (double s : scores.near) c.near_fired += s >= gamma ? 1 : 0;
  for (double s : scores.random) c.random_fired += s >= gamma ? 1 : 0;
  return c;
}

AdjustedCounts adjusted_counts(const ThresholdCounts& counts, const ManualAdjustment& adj) {
  if (adj.p_near < 0.0 || adj.p_near > 1.0 || adj.p_rand < 0.0 || adj.p_rand > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "manual adjustment fractions must lie in [0, 1]");
  }
  AdjustedCounts out;
  out.tp = counts.tp;
  out.fn = counts.fn;
  out.fp_manual = adj.p_near * static_cast<double>(counts.near_fired) +
                  adj.p_rand * counts.random_weight * static_cast<double>(counts.random_fired);
  const double denom = static_cast<double>(out.tp) + out.fp_manual;
  out.precision = denom > 0.0 ? static_cast<double>(out.tp) / denom : 0.0;
  return out;
}

PRCurve pr_curve(const PoolScores& scores, const EvalPool& pool,
                 const std::optional<ManualAdjustment>& adjustment) {
  check_estimator(pool);
  if (scores.positives.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "precision-recall curve needs at least one positive");
  }
  enum Kind : std::uint8_t { kPositive, kNear, kRandom };
  std::vector<std::pair<double, Kind>> events;
  events.reserve(scores.positives.size() + scores.near.size() + scores.random.size());
  for (double s : scores.positives) events.emplace_back(s, kPositive);
  for (double s : scores.near) events.emplace_back(s, kNear);
  for (double s : scores.random) events.emplace_back(s, kRandom);
  std::sort(events.begin(), events.end(),
            [](const auto& x, const auto& y) { return x.first > y.first; });

  const ManualAdjustment adj = adjustment.value_or(ManualAdjustment{});
  const double n_pos = static_cast<double>(scores.positives.size());
  ThresholdCounts running;
  running.random_weight = pool.random_weight();
  running.fn = scores.positives.size();

  PRCurve curve;
  double previous_recall = 0.0;
  for (std::size_t i = 0; i < events.size();) {
    const double gamma = events[i].first;
    for (; i < events.size() && events[i].first == gamma; ++i) {
      switch (events[i].second) {
        case kPositive: ++running.tp; --running.fn; break;
        case kNear: ++running.near_fired; break;
        case kRandom: ++running.random_fired; break;
      }
    }
    const auto adjusted = adjusted_counts(running, adj);
    CurvePoint point;
    point.threshold = gamma;
    point.tp = running.tp;
    point.fn = running.fn;
    point.fp_hat = adjusted.fp_manual;
    point.precision = adjusted.precision;
    point.recall = static_cast<double>(running.tp) / n_pos;
    curve.average_precision += (point.recall - previous_recall) * point.precision;
    previous_recall = point.recall;
    curve.points.push_back(point);
  }
  return curve;
}

std::optional<double> precision_at_recall(const PRCurve& curve, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "recall level must be in (0, 1]");
  for (const auto& p : curve.points) {
    if (p.recall >= r) return p.precision;
  }
  return std::nullopt;
}

namespace {

// Step-sum AP over a small labeled list (exact counts).
double list_average_precision(std::vector<std::pair<double, int>> items) {
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  double positives = 0.0;
  for (const auto& it : items) positives += it.second;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    const double gamma = items[i].first;
    for (; i < items.size() && items[i].first == gamma; ++i) (items[i].second ? tp : fp) += 1.0;
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

}  // namespace

BalancedReport balanced_metrics(std::span<const double> scores, std::span<const StatedPair> stated) {
  if (scores.size() != stated.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one score per stated pair required");
  }
  BalancedReport report;
  report.examples = stated.size();
  double tp = 0, fp = 0, fn = 0, correct = 0;
  std::map<UtteranceId, std::vector<std::pair<double, int>>> by_question;
  for (std::size_t i = 0; i < stated.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    const bool actual = stated[i].label == 1;
    correct += predicted == actual ? 1 : 0;
    if (predicted && actual) tp += 1;
    if (predicted && !actual) fp += 1;
    if (!predicted && actual) fn += 1;
    by_question[stated[i].key.a].emplace_back(scores[i], stated[i].label);
  }
  if (!stated.empty()) report.accuracy = correct / static_cast<double>(stated.size());
  report.f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;

  double map_sum = 0.0;
  for (auto& [question, items] : by_question) {
    const bool has_pos = std::any_of(items.begin(), items.end(), [](const auto& x) { return x.second == 1; });
    const bool has_neg = std::any_of(items.begin(), items.end(), [](const auto& x) { return x.second == 0; });
    if (!has_pos || !has_neg) continue;
    ++report.clean_questions;
    map_sum += list_average_precision(items);
  }
  if (report.clean_questions > 0) report.c_map = map_sum / static_cast<double>(report.clean_questions);
  return report;
}

EvalSummary summarize(const PRCurve& curve, const EvalPool& pool) {
  EvalSummary s;
  s.average_precision = curve.average_precision;
  s.precision_at_r20 = precision_at_recall(curve, 0.2);
  s.positives = pool.positives.size();
  s.near_negatives = pool.near_negatives.size();
  s.random_negatives = pool.random_negatives.size();
  s.w_random = pool.w_random;
  return s;
}

namespace {

void put_double(std::ostream& out, double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.write(buf, end - buf);
}

}  // namespace

void write_curve_csv(std::ostream& out, const PRCurve& curve) {
  out << "threshold,tp,fp_hat,fn,precision,recall\n";
  for (const auto& p : curve.points) {
    put_double(out, p.threshold);
    out << ',' << p.tp << ',';
    put_double(out, p.fp_hat);
    out << ',' << p.fn << ',';
    put_double(out, p.precision);
    out << ',';
    put_double(out, p.recall);
    out << '\n';
  }
}

}  // namespace pairal
