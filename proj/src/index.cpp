#include "pairal/index.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <spdlog/spdlog.h>

#include "pairal/error.hpp"

namespace pairal {

void EmbeddingIndex::append(UtteranceId id, const Vector& embedding) {
  Vector unit;
  try {
    unit = normalized(embedding);
  } catch (const Error&) {
    throw Error(ErrorCode::kDegenerateEmbedding, "utterance " + std::to_string(id) +
                                                     " has a zero-norm embedding");
  }
  vectors_.insert(vectors_.end(), unit.begin(), unit.end());
}

void EmbeddingIndex::finish() {
  by_id_.clear();
  by_id_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) by_id_.emplace_back(ids_[i], i);
  std::sort(by_id_.begin(), by_id_.end());
  for (std::size_t i = 1; i < by_id_.size(); ++i) {
    if (by_id_[i].first == by_id_[i - 1].first) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate id in index");
    }
  }
}

std::optional<std::size_t> EmbeddingIndex::position(UtteranceId id) const {
  auto it = std::lower_bound(by_id_.begin(), by_id_.end(), std::make_pair(id, std::size_t{0}));
  if (it == by_id_.end() || it->first != id) return std::nullopt;
  return it->second;
}

namespace {

bool closer(const Neighbor& x, const Neighbor& y) {
  if (x.cosine != y.cosine) return x.cosine > y.cosine;
  return x.id < y.id;
}

}  // namespace

std::vector<Neighbor> EmbeddingIndex::nearest(std::span<const double> unit_query, std::size_t k,
                                              std::optional<UtteranceId> skip) const {
  std::vector<Neighbor> scored;
  if (ann_) {
    for (std::size_t pos : ann_->search(unit_query, skip ? k + 1 : k)) {
      if (skip && ids_[pos] == *skip) continue;
      scored.push_back({ids_[pos], dot(unit_query, vector_at(pos))});
    }
  } else {
    scored.reserve(ids_.size());
    for (std::size_t pos = 0; pos < ids_.size(); ++pos) {
      if (skip && ids_[pos] == *skip) continue;
      scored.push_back({ids_[pos], dot(unit_query, vector_at(pos))});
    }
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    closer);
  scored.resize(keep);
  return scored;
}

EmbeddingIndex build_left_index(const EmbeddingModel& model, const Corpus& corpus,
                                const PairSpace& space) {
  return EmbeddingIndex::build(model, space.left_ids(),
                               [&](UtteranceId id) -> const std::string& { return corpus.left_text(id); });
}

EmbeddingIndex build_right_index(const EmbeddingModel& model, const Corpus& corpus,
                                 const PairSpace& space) {
  return EmbeddingIndex::build(model, space.right_ids(),
                               [&](UtteranceId id) -> const std::string& { return corpus.right_text(id); });
}

CandidateSet build_candidates(const EmbeddingModel& model, const EmbeddingIndex& left,
                              const EmbeddingIndex& right, PairMode mode, std::size_t m,
                              const PairSet& exclude, int round) {
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");
  const bool symmetric = mode == PairMode::kSymmetric;
  if (m > right.size()) {
    spdlog::warn("candidates: m={} exceeds side size {}; clamping", m, right.size());
    m = right.size();
  }
  CandidateSet out;
  out.m = m;
  out.round = round;
  for (std::size_t pos = 0; pos < left.size(); ++pos) {
    const UtteranceId query_id = left.ids()[pos];
    const auto neighbors = right.nearest(left.vector_at(pos), m,
                                         symmetric ? std::optional<UtteranceId>(query_id) : std::nullopt);
    for (const auto& nb : neighbors) {
      const PairKey key = symmetric ? PairKey::canonical(query_id, nb.id) : PairKey{query_id, nb.id};
      if (!exclude.empty() && exclude.contains(key)) continue;
      out.items.push_back({key, nb.cosine, model.probability_from_cosine(nb.cosine)});
    }
  }
  std::sort(out.items.begin(), out.items.end(),
            [](const Candidate& x, const Candidate& y) { return x.key < y.key; });
  out.items.erase(std::unique(out.items.begin(), out.items.end(),
                              [](const Candidate& x, const Candidate& y) { return x.key == y.key; }),
                  out.items.end());
  return out;
}

bool higher_score(const Candidate& x, const Candidate& y) {
  if (x.probability != y.probability) return x.probability > y.probability;
  if (x.cosine != y.cosine) return x.cosine > y.cosine;
  return x.key < y.key;
}

bool more_uncertain(const Candidate& x, const Candidate& y) {
  const double ux = std::abs(x.probability - 0.5);
  const double uy = std::abs(y.probability - 0.5);
  if (ux != uy) return ux < uy;
  if (x.cosine != y.cosine) return x.cosine > y.cosine;
  return x.key < y.key;
}

namespace {

template <typename Less>
std::vector<Candidate> select_first(const CandidateSet& candidates, std::size_t n, Less less,
                                    const char* what) {
  std::vector<Candidate> items = candidates.items;
  if (n > items.size()) {
    spdlog::warn("{}: requested {} of {} candidates; returning all", what, n, items.size());
    n = items.size();
  }
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(), less);
  items.resize(n);
  return items;
}

}  // namespace

std::vector<Candidate> top_scoring(const CandidateSet& candidates, std::size_t n) {
  return select_first(candidates, n, higher_score, "top_scoring");
}

std::vector<Candidate> most_uncertain(const CandidateSet& candidates, std::size_t n) {
  return select_first(candidates, n, more_uncertain, "most_uncertain");
}

void write_candidates(std::ostream& out, const CandidateSet& candidates) {
  out.precision(17);
  for (const auto& c : candidates.items) {
    out << c.key.a << '\t' << c.key.b << '\t' << c.cosine << '\t' << c.probability << '\n';
  }
}

}  // namespace pairal
