#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pairal/corpus.hpp"
#include "pairal/embed.hpp"

namespace pairal {

enum class IndexBackend { kExact, kPluggableAnn };

// Approximate search hook. Implementations return positions into the index's
// vector table, best first; the index re-scores them exactly. Exact search
// remains the reference for any backend's recall.
class AnnBackend {
 public:
  virtual ~AnnBackend() = default;
  virtual std::vector<std::size_t> search(std::span<const double> unit_query,
                                          std::size_t k) const = 0;
};

struct Neighbor {
  UtteranceId id = 0;
  double cosine = 0.0;
};

// Unit-normalized embeddings of one side's utterances.
class EmbeddingIndex {
 public:
  template <typename TextOf>
  static EmbeddingIndex build(const EmbeddingModel& model, std::span<const UtteranceId> ids,
                              TextOf&& text_of) {
    EmbeddingIndex index(model.dim());
    index.ids_.assign(ids.begin(), ids.end());
    index.vectors_.reserve(ids.size() * model.dim());
    for (UtteranceId id : ids) index.append(id, model.embed(text_of(id)));
    index.finish();
    return index;
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const UtteranceId> ids() const { return ids_; }
  std::span<const double> vector_at(std::size_t position) const {
    return {vectors_.data() + position * dim_, dim_};
  }
  std::optional<std::size_t> position(UtteranceId id) const;

  IndexBackend backend() const { return ann_ ? IndexBackend::kPluggableAnn : IndexBackend::kExact; }
  void attach_ann(std::shared_ptr<const AnnBackend> ann) { ann_ = std::move(ann); }

  // k most similar stored utterances to a unit query, ties broken by id.
  std::vector<Neighbor> nearest(std::span<const double> unit_query, std::size_t k,
                                std::optional<UtteranceId> skip = std::nullopt) const;

 private:
  explicit EmbeddingIndex(std::size_t dim) : dim_(dim) {}
  void append(UtteranceId id, const Vector& embedding);
  void finish();

  std::size_t dim_;
  std::vector<UtteranceId> ids_;
  std::vector<double> vectors_;
  std::vector<std::pair<UtteranceId, std::size_t>> by_id_;
  std::shared_ptr<const AnnBackend> ann_;
};

// Index over the left (or right) utterances of a pair space.
EmbeddingIndex build_left_index(const EmbeddingModel& model, const Corpus& corpus,
                                const PairSpace& space);
EmbeddingIndex build_right_index(const EmbeddingModel& model, const Corpus& corpus,
                                 const PairSpace& space);

struct Candidate {
  PairKey key;
  double cosine = 0.0;
  double probability = 0.0;
};

struct CandidateSet {
  std::vector<Candidate> items;  // sorted by key, unique
  std::size_t m = 0;
  int round = 0;
};

// Union over left utterances of their m nearest right-side neighbors, minus
// `exclude`. In symmetric mode pass the same index twice; self matches are
// skipped and pairs canonicalized.
CandidateSet build_candidates(const EmbeddingModel& model, const EmbeddingIndex& left,
                              const EmbeddingIndex& right, PairMode mode, std::size_t m,
                              const PairSet& exclude, int round = 0);

// Deterministic orders: probability descending (resp. |p - 1/2| ascending),
// then cosine descending, then key ascending.
std::vector<Candidate> top_scoring(const CandidateSet& candidates, std::size_t n);
std::vector<Candidate> most_uncertain(const CandidateSet& candidates, std::size_t n);

bool higher_score(const Candidate& x, const Candidate& y);
bool more_uncertain(const Candidate& x, const Candidate& y);

void write_candidates(std::ostream& out, const CandidateSet& candidates);

}  // namespace pairal
