#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pairal/corpus.hpp"
#include "pairal/embed.hpp"

namespace pairal {

// Evaluation sample of one split's all-pairs set: every positive, the
// near negatives D_near (highest static cosine) and a uniform sample D_random
// of the remaining negatives, which stands for w_random pairs.
struct EvalPool {
  std::vector<PairKey> positives;
  std::vector<PairKey> near_negatives;
  std::vector<PairKey> random_negatives;
  std::uint64_t w_random = 0;
  std::uint64_t space_size = 0;

  double random_weight() const;
};

EvalPool build_eval_pool(const Corpus& corpus, const LabelOracle& oracle, const PairSpace& space,
                         const EmbeddingModel& static_model, std::size_t near_size,
                         std::size_t random_size, std::uint64_t seed);

// Redraws D_random only (D_near and the positives are kept).
void resample_random_negatives(EvalPool& pool, const PairSpace& space, std::size_t random_size,
                               std::uint64_t seed);

struct PoolScores {
  std::vector<double> positives;
  std::vector<double> near;
  std::vector<double> random;
};

using PairScorer = std::function<double(PairKey)>;

PoolScores score_pool(const EvalPool& pool, const PairScorer& score);
// Inference-mode probabilities of `model` on every pool member.
PoolScores score_pool(const EvalPool& pool, const EmbeddingModel& model, const Corpus& corpus,
                      const PairSpace& space);

struct ThresholdCounts {
  std::uint64_t tp = 0;
  std::uint64_t fn = 0;
  std::uint64_t near_fired = 0;
  std::uint64_t random_fired = 0;
  double random_weight = 0.0;  // w_random / |D_random|

  double fp_hat() const { return static_cast<double>(near_fired) + random_weight * static_cast<double>(random_fired); }
};

// Scores count as predicted positive when S(x) >= gamma.
ThresholdCounts counts_at_threshold(const PoolScores& scores, const EvalPool& pool, double gamma);

// Estimated fractions of putative false positives that are real errors.
struct ManualAdjustment {
  double p_near = 1.0;
  double p_rand = 1.0;
};

struct AdjustedCounts {
  std::uint64_t tp = 0;
  double fp_manual = 0.0;
  std::uint64_t fn = 0;
  double precision = 0.0;
};

AdjustedCounts adjusted_counts(const ThresholdCounts& counts, const ManualAdjustment& adjustment);

struct CurvePoint {
  double threshold = 0.0;
  std::uint64_t tp = 0;
  double fp_hat = 0.0;
  std::uint64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PRCurve {
  std::vector<CurvePoint> points;  // thresholds descending
  double average_precision = 0.0;
};

PRCurve pr_curve(const PoolScores& scores, const EvalPool& pool,
                 const std::optional<ManualAdjustment>& adjustment = std::nullopt);

// Precision at the highest threshold reaching recall >= r; nullopt if never.
std::optional<double> precision_at_recall(const PRCurve& curve, double r);

struct BalancedReport {
  std::size_t examples = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::optional<double> c_map;
  std::size_t clean_questions = 0;
};

// Metrics on stated (heuristically balanced) data. scores[i] belongs to
// stated[i]; c-MAP groups examples by the left utterance.
BalancedReport balanced_metrics(std::span<const double> scores, std::span<const StatedPair> stated);

struct EvalSummary {
  double average_precision = 0.0;
  std::optional<double> precision_at_r20;
  std::size_t positives = 0;
  std::size_t near_negatives = 0;
  std::size_t random_negatives = 0;
  std::uint64_t w_random = 0;
};

EvalSummary summarize(const PRCurve& curve, const EvalPool& pool);

// CSV columns: threshold,tp,fp_hat,fn,precision,recall
void write_curve_csv(std::ostream& out, const PRCurve& curve);

}  // namespace pairal
