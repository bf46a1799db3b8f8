#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace pairal {

using UtteranceId = std::uint32_t;

enum class Side : std::uint8_t { kLeft, kRight, kShared };
enum class PairMode : std::uint8_t { kSymmetric, kBipartite };
enum class Split : std::uint8_t { kTrain = 0, kDev = 1, kTest = 2 };

std::string_view to_string(Side side);
std::string_view to_string(PairMode mode);
std::string_view to_string(Split split);
PairMode parse_pair_mode(std::string_view text);
Split parse_split(std::string_view text);

struct Utterance {
  UtteranceId id = 0;
  Side side = Side::kShared;
  std::string text;
};

// In symmetric mode a < b; in bipartite mode a is a LEFT id and b a RIGHT id.
struct PairKey {
  UtteranceId a = 0;
  UtteranceId b = 0;

  auto operator<=>(const PairKey&) const = default;

  static PairKey canonical(UtteranceId x, UtteranceId y) {
    return x < y ? PairKey{x, y} : PairKey{y, x};
  }
};

struct PairKeyHash {
  std::size_t operator()(PairKey key) const noexcept {
    std::uint64_t x = (std::uint64_t{key.a} << 32) | key.b;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

using PairSet = std::unordered_set<PairKey, PairKeyHash>;

// Utterance store. In symmetric mode there is a single SHARED side and both
// accessors address it.
class Corpus {
 public:
  Corpus(PairMode mode, std::vector<std::string> left, std::vector<std::string> right = {});

  PairMode mode() const { return mode_; }
  std::size_t left_size() const { return left_.size(); }
  std::size_t right_size() const {
    return mode_ == PairMode::kSymmetric ? left_.size() : right_.size();
  }
  const std::string& left_text(UtteranceId id) const { return left_.at(id); }
  const std::string& right_text(UtteranceId id) const {
    return mode_ == PairMode::kSymmetric ? left_.at(id) : right_.at(id);
  }

  std::vector<Utterance> utterances() const;

  // Stable content hash (FNV-1a over mode and texts).
  std::uint64_t fingerprint() const;

 private:
  PairMode mode_;
  std::vector<std::string> left_;
  std::vector<std::string> right_;
};

// The all-pairs set of one split. Pairs are addressed by a dense index so that
// uniform sampling never materializes the quadratic space.
class PairSpace {
 public:
  static PairSpace symmetric(std::vector<UtteranceId> ids);
  static PairSpace bipartite(std::vector<UtteranceId> left, std::vector<UtteranceId> right);

  PairMode mode() const { return mode_; }
  std::span<const UtteranceId> left_ids() const { return left_; }
  std::span<const UtteranceId> right_ids() const {
    return mode_ == PairMode::kSymmetric ? std::span<const UtteranceId>(left_)
                                         : std::span<const UtteranceId>(right_);
  }

  std::uint64_t size() const;
  PairKey unrank(std::uint64_t index) const;
  std::optional<std::uint64_t> rank(PairKey key) const;
  bool contains(PairKey key) const { return rank(key).has_value(); }
  bool contains_left(UtteranceId id) const;
  bool contains_right(UtteranceId id) const;

  template <typename F>
  void for_each(F&& visit) const {
    const std::uint64_t n = size();
    for (std::uint64_t k = 0; k < n; ++k) visit(unrank(k));
  }

 private:
  PairSpace(PairMode mode, std::vector<UtteranceId> left, std::vector<UtteranceId> right);

  PairMode mode_;
  std::vector<UtteranceId> left_;
  std::vector<UtteranceId> right_;
};

// Imputed ground truth for every pair: transitive closure of positive links
// (symmetric) or "unlisted means negative" (bipartite). Immutable once built.
class LabelOracle {
 public:
  static LabelOracle symmetric(std::size_t n, std::span<const PairKey> positive_edges);
  static LabelOracle bipartite(std::span<const PairKey> positives);

  PairMode mode() const { return mode_; }
  bool label(PairKey key) const;
  // Sorted positives lying inside the space.
  std::vector<PairKey> positives_in(const PairSpace& space) const;
  // Largest number of positive partners of any single utterance in the space.
  std::size_t max_positive_degree(const PairSpace& space) const;
  // Component representative (symmetric mode only).
  std::uint32_t component(UtteranceId id) const { return component_.at(id); }

 private:
  explicit LabelOracle(PairMode mode) : mode_(mode) {}

  PairMode mode_;
  std::vector<std::uint32_t> component_;
  PairSet positives_;
};

struct StatedPair {
  PairKey key;
  int label = 0;

  auto operator<=>(const StatedPair&) const = default;
};

// Pairs from the original heuristic dataset (positives plus stated negatives).
struct StatedDataset {
  std::vector<StatedPair> pairs;

  StatedDataset restrict_to(const PairSpace& space) const;
  std::size_t positives() const;
  std::size_t negatives() const { return pairs.size() - positives(); }
};

// Utterance-to-split assignment. In bipartite mode only LEFT utterances are
// partitioned; every split pairs its left ids with the full RIGHT side.
class SplitSpec {
 public:
  SplitSpec(PairMode mode, std::vector<Split> left_assignment, std::size_t right_size);

  PairMode mode() const { return mode_; }
  Split split_of(UtteranceId left_id) const { return assignment_.at(left_id); }
  std::span<const Split> assignment() const { return assignment_; }
  PairSpace space(Split split) const;
  std::vector<UtteranceId> left_ids(Split split) const;
  std::array<double, 3> achieved_fractions() const;

 private:
  PairMode mode_;
  std::vector<Split> assignment_;
  std::size_t right_size_;
};

struct IngestReport {
  std::size_t left_utterances = 0;
  std::size_t right_utterances = 0;
  std::size_t stated_positives = 0;
  std::size_t stated_negatives = 0;
  std::size_t stated_negatives_contradicted = 0;  // negatives the closure marks positive
  std::uint64_t imputed_positive_pairs = 0;
};

struct IngestResult {
  Corpus corpus;
  StatedDataset stated;
  LabelOracle oracle;
  IngestReport report;
};

IngestResult ingest(std::istream& utterances, std::istream& pairs, PairMode mode);
IngestResult ingest(const std::filesystem::path& utterance_file,
                    const std::filesystem::path& pairs_file, PairMode mode);

void write_utterances(std::ostream& out, const Corpus& corpus);
void write_pairs(std::ostream& out, std::span<const StatedPair> pairs);

// Components of the stated pairing graph are assigned atomically, greedily in
// shuffled order, each to the split furthest below its target size.
SplitSpec split_corpus(const Corpus& corpus, const StatedDataset& stated,
                       std::array<double, 3> fractions, std::uint64_t seed);

struct SyntheticVocab {
  // A cluster means a set of concepts; every utterance renders each concept
  // with one of its interchangeable surface forms.
  std::size_t n_concepts = 300;
  std::size_t synonyms_per_concept = 2;
  std::size_t concepts_per_cluster = 3;
  // Templates are shared phrasings that create high-overlap negatives.
  std::size_t n_templates = 40;
  std::size_t template_length = 6;
  std::size_t template_per_utterance = 4;
  double home_template_prob = 0.2;
  // Filler words are sprinkled uniformly.
  std::size_t filler_vocab = 500;
  std::size_t fillers_per_utterance = 1;
  // Stated negatives recorded per cluster member (heuristic near-duplicates).
  std::size_t stated_negatives_per_member = 1;
};

struct SyntheticCorpus {
  Corpus corpus;
  StatedDataset stated;
  LabelOracle oracle;
};

SyntheticCorpus gen_synthetic(std::size_t n_clusters, std::size_t cluster_size,
                              std::size_t n_distractors, const SyntheticVocab& vocab,
                              std::uint64_t seed);

// Uniform without replacement over `space` minus `exclude`.
std::vector<PairKey> sample_random_pairs(const PairSpace& space, std::uint64_t count,
                                         const PairSet& exclude, std::uint64_t seed);

}  // namespace pairal
