#include "pairal/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pairal/error.hpp"
#include "pairal/rng.hpp"
#include "pairal/union_find.hpp"

namespace pairal {

std::string_view to_string(Side side) {
  switch (side) {
    case Side::kLeft: return "LEFT";
    case Side::kRight: return "RIGHT";
    case Side::kShared: return "SHARED";
  }
  return "SHARED";
}

std::string_view to_string(PairMode mode) {
  return mode == PairMode::kSymmetric ? "symmetric" : "bipartite";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

namespace {

std::string upper(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line, std::size_t max_fields) {
  std::vector<std::string_view> fields;
  while (fields.size() + 1 < max_fields) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) break;
    fields.push_back(line.substr(0, tab));
    line.remove_prefix(tab + 1);
  }
  fields.push_back(line);
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void parse_fail(std::string_view file, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, std::string(file) + ":" + std::to_string(line) + ": " + what);
}

std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

}  // namespace

PairMode parse_pair_mode(std::string_view text) {
  const auto u = upper(text);
  if (u == "SYMMETRIC") return PairMode::kSymmetric;
  if (u == "BIPARTITE") return PairMode::kBipartite;
  throw Error(ErrorCode::kInvalidArgument, "unknown pair mode '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  const auto u = upper(text);
  if (u == "TRAIN") return Split::kTrain;
  if (u == "DEV") return Split::kDev;
  if (u == "TEST") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- Corpus

Corpus::Corpus(PairMode mode, std::vector<std::string> left, std::vector<std::string> right)
    : mode_(mode), left_(std::move(left)), right_(std::move(right)) {
  if (mode_ == PairMode::kSymmetric && !right_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "symmetric corpus has a single shared side");
  }
}

std::vector<Utterance> Corpus::utterances() const {
  std::vector<Utterance> out;
  out.reserve(left_.size() + right_.size());
  const Side left_side = mode_ == PairMode::kSymmetric ? Side::kShared : Side::kLeft;
  for (std::size_t i = 0; i < left_.size(); ++i) {
    out.push_back({static_cast<UtteranceId>(i), left_side, left_[i]});
  }
  for (std::size_t i = 0; i < right_.size(); ++i) {
    out.push_back({static_cast<UtteranceId>(i), Side::kRight, right_[i]});
  }
  return out;
}

std::uint64_t Corpus::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  feed(to_string(mode_));
  for (const auto& t : left_) feed(t);
  feed("|");
  for (const auto& t : right_) feed(t);
  return h;
}

// ---------------------------------------------------------------- PairSpace

PairSpace::PairSpace(PairMode mode, std::vector<UtteranceId> left, std::vector<UtteranceId> right)
    : mode_(mode), left_(std::move(left)), right_(std::move(right)) {
  std::sort(left_.begin(), left_.end());
  std::sort(right_.begin(), right_.end());
  if (std::adjacent_find(left_.begin(), left_.end()) != left_.end() ||
      std::adjacent_find(right_.begin(), right_.end()) != right_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "pair space ids must be distinct");
  }
}

PairSpace PairSpace::symmetric(std::vector<UtteranceId> ids) {
  return PairSpace(PairMode::kSymmetric, std::move(ids), {});
}

PairSpace PairSpace::bipartite(std::vector<UtteranceId> left, std::vector<UtteranceId> right) {
  return PairSpace(PairMode::kBipartite, std::move(left), std::move(right));
}

std::uint64_t PairSpace::size() const {
  if (mode_ == PairMode::kSymmetric) return choose2(left_.size());
  return std::uint64_t{left_.size()} * right_.size();
}

namespace {

// Number of symmetric pairs whose first position is below i, for n items.
std::uint64_t row_offset(std::uint64_t i, std::uint64_t n) { return i * (2 * n - i - 1) / 2; }

}  // namespace

PairKey PairSpace::unrank(std::uint64_t index) const {
  if (index >= size()) throw Error(ErrorCode::kInvalidArgument, "pair index out of range");
  if (mode_ == PairMode::kBipartite) {
    const std::uint64_t r = right_.size();
    return {left_[index / r], right_[index % r]};
  }
  const std::uint64_t n = left_.size();
  const long double b = 2.0L * static_cast<long double>(n) - 1.0L;
  const long double disc = b * b - 8.0L * static_cast<long double>(index);
  auto i = static_cast<std::uint64_t>(std::floor((b - std::sqrt(std::max(disc, 0.0L))) / 2.0L));
  i = std::min<std::uint64_t>(i, n - 2);
  while (i + 1 <= n - 2 && row_offset(i + 1, n) <= index) ++i;
  while (i > 0 && row_offset(i, n) > index) --i;
  const std::uint64_t j = index - row_offset(i, n) + i + 1;
  return {left_[i], left_[j]};
}

std::optional<std::uint64_t> PairSpace::rank(PairKey key) const {
  auto position = [](const std::vector<UtteranceId>& ids, UtteranceId id) -> std::optional<std::uint64_t> {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::uint64_t>(it - ids.begin());
  };
  if (mode_ == PairMode::kBipartite) {
    auto pa = position(left_, key.a);
    auto pb = position(right_, key.b);
    if (!pa || !pb) return std::nullopt;
    return *pa * right_.size() + *pb;
  }
  if (key.a >= key.b) return std::nullopt;
  auto pa = position(left_, key.a);
  auto pb = position(left_, key.b);
  if (!pa || !pb) return std::nullopt;
  return row_offset(*pa, left_.size()) + (*pb - *pa - 1);
}

bool PairSpace::contains_left(UtteranceId id) const {
  return std::binary_search(left_.begin(), left_.end(), id);
}

bool PairSpace::contains_right(UtteranceId id) const {
  const auto ids = right_ids();
  return std::binary_search(ids.begin(), ids.end(), id);
}

// ---------------------------------------------------------------- LabelOracle

LabelOracle LabelOracle::symmetric(std::size_t n, std::span<const PairKey> positive_edges) {
  UnionFind forest(n);
  for (const auto& e : positive_edges) {
    if (e.a >= n || e.b >= n) {
      throw Error(ErrorCode::kInvalidArgument, "positive edge references unknown utterance");
    }
    forest.unite(e.a, e.b);
  }
  LabelOracle oracle(PairMode::kSymmetric);
  oracle.component_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) oracle.component_[i] = forest.find(i);
  return oracle;
}

LabelOracle LabelOracle::bipartite(std::span<const PairKey> positives) {
  LabelOracle oracle(PairMode::kBipartite);
  oracle.positives_.insert(positives.begin(), positives.end());
  return oracle;
}

bool LabelOracle::label(PairKey key) const {
  if (mode_ == PairMode::kBipartite) return positives_.contains(key);
  if (key.a == key.b) return false;
  return component_.at(key.a) == component_.at(key.b);
}

std::vector<PairKey> LabelOracle::positives_in(const PairSpace& space) const {
  std::vector<PairKey> out;
  if (mode_ == PairMode::kBipartite) {
    for (const auto& key : positives_) {
      if (space.contains(key)) out.push_back(key);
    }
  } else {
    std::map<std::uint32_t, std::vector<UtteranceId>> groups;
    for (UtteranceId id : space.left_ids()) groups[component_.at(id)].push_back(id);
    for (const auto& [root, members] : groups) {
      for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          out.push_back(PairKey::canonical(members[i], members[j]));
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t LabelOracle::max_positive_degree(const PairSpace& space) const {
  std::map<UtteranceId, std::size_t> degree;
  for (const auto& key : positives_in(space)) {
    ++degree[key.a];
    if (mode_ == PairMode::kSymmetric) ++degree[key.b];
  }
  std::size_t best = 0;
  for (const auto& [id, d] : degree) best = std::max(best, d);
  return best;
}

// ---------------------------------------------------------------- StatedDataset

StatedDataset StatedDataset::restrict_to(const PairSpace& space) const {
  StatedDataset out;
  for (const auto& p : pairs) {
    if (space.contains(p.key)) out.pairs.push_back(p);
  }
  return out;
}

std::size_t StatedDataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const StatedPair& p) { return p.label == 1; }));
}

// ---------------------------------------------------------------- SplitSpec

SplitSpec::SplitSpec(PairMode mode, std::vector<Split> left_assignment, std::size_t right_size)
    : mode_(mode), assignment_(std::move(left_assignment)), right_size_(right_size) {}

std::vector<UtteranceId> SplitSpec::left_ids(Split split) const {
  std::vector<UtteranceId> ids;
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    if (assignment_[i] == split) ids.push_back(static_cast<UtteranceId>(i));
  }
  return ids;
}

PairSpace SplitSpec::space(Split split) const {
  if (mode_ == PairMode::kSymmetric) return PairSpace::symmetric(left_ids(split));
  std::vector<UtteranceId> right(right_size_);
  for (std::size_t i = 0; i < right_size_; ++i) right[i] = static_cast<UtteranceId>(i);
  return PairSpace::bipartite(left_ids(split), std::move(right));
}

std::array<double, 3> SplitSpec::achieved_fractions() const {
  std::array<double, 3> counts{};
  for (Split s : assignment_) counts[static_cast<std::size_t>(s)] += 1.0;
  if (!assignment_.empty()) {
    for (auto& c : counts) c /= static_cast<double>(assignment_.size());
  }
  return counts;
}

// ---------------------------------------------------------------- ingest

IngestResult ingest(std::istream& utterances, std::istream& pairs, PairMode mode) {
  constexpr std::string_view kUttName = "utterances";
  constexpr std::string_view kPairName = "pairs";

  std::map<UtteranceId, std::string> left;
  std::map<UtteranceId, std::string> right;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(utterances, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line, 4);
    if (fields.size() < 3) parse_fail(kUttName, line_no, "expected id<TAB>side<TAB>text");
    UtteranceId id = 0;
    if (!parse_number(fields[0], id)) parse_fail(kUttName, line_no, "bad id");
    const std::string side = upper(fields[1]);
    std::string text(fields[2]);
    if (fields.size() == 4 && !fields[3].empty()) {
      // Optional source title is folded into the stored text.
      text = std::string(fields[3]) + " . " + text;
    }
    if (text.find_first_not_of(" \t") == std::string::npos) {
      parse_fail(kUttName, line_no, "empty text");
    }
    std::map<UtteranceId, std::string>* target = nullptr;
    if (mode == PairMode::kSymmetric) {
      if (side != "SHARED") parse_fail(kUttName, line_no, "symmetric mode requires side SHARED");
      target = &left;
    } else if (side == "LEFT") {
      target = &left;
    } else if (side == "RIGHT") {
      target = &right;
    } else {
      parse_fail(kUttName, line_no, "bipartite mode requires side LEFT or RIGHT");
    }
    if (!target->emplace(id, std::move(text)).second) {
      parse_fail(kUttName, line_no, "duplicate id " + std::to_string(id));
    }
  }

  auto densify = [&](std::map<UtteranceId, std::string>& by_id, std::string_view side) {
    std::vector<std::string> out;
    out.reserve(by_id.size());
    for (auto& [id, text] : by_id) {
      if (id != out.size()) {
        throw Error(ErrorCode::kParse, std::string(kUttName) + ": " + std::string(side) +
                                           " ids are not dense; missing id " +
                                           std::to_string(out.size()));
      }
      out.push_back(std::move(text));
    }
    return out;
  };
  std::vector<std::string> left_texts = densify(left, "left");
  std::vector<std::string> right_texts = densify(right, "right");
  const std::size_t n_left = left_texts.size();
  const std::size_t n_right = mode == PairMode::kSymmetric ? n_left : right_texts.size();

  std::map<PairKey, int> labels;
  line_no = 0;
  while (std::getline(pairs, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line, 3);
    if (fields.size() != 3) parse_fail(kPairName, line_no, "expected id_a<TAB>id_b<TAB>label");
    UtteranceId a = 0;
    UtteranceId b = 0;
    int label = 0;
    if (!parse_number(fields[0], a) || !parse_number(fields[1], b)) {
      parse_fail(kPairName, line_no, "bad id");
    }
    if (!parse_number(fields[2], label) || (label != 0 && label != 1)) {
      parse_fail(kPairName, line_no, "label must be 0 or 1");
    }
    if (a >= n_left) parse_fail(kPairName, line_no, "dangling id " + std::to_string(a));
    if (b >= n_right) parse_fail(kPairName, line_no, "dangling id " + std::to_string(b));
    PairKey key{a, b};
    if (mode == PairMode::kSymmetric) {
      if (a == b) parse_fail(kPairName, line_no, "self pair");
      key = PairKey::canonical(a, b);
    }
    auto [it, inserted] = labels.emplace(key, label);
    if (!inserted && it->second != label) {
      parse_fail(kPairName, line_no, "conflicting label for pair " + std::to_string(key.a) + "," +
                                         std::to_string(key.b));
    }
  }

  StatedDataset stated;
  std::vector<PairKey> positive_keys;
  for (const auto& [key, label] : labels) {
    stated.pairs.push_back({key, label});
    if (label == 1) positive_keys.push_back(key);
  }

  LabelOracle oracle = mode == PairMode::kSymmetric ? LabelOracle::symmetric(n_left, positive_keys)
                                                    : LabelOracle::bipartite(positive_keys);
  IngestReport report;
  report.left_utterances = n_left;
  report.right_utterances = mode == PairMode::kSymmetric ? 0 : n_right;
  report.stated_positives = positive_keys.size();
  report.stated_negatives = stated.pairs.size() - positive_keys.size();
  for (const auto& p : stated.pairs) {
    if (p.label == 0 && oracle.label(p.key)) ++report.stated_negatives_contradicted;
  }
  if (mode == PairMode::kSymmetric) {
    std::map<std::uint32_t, std::uint64_t> sizes;
    for (UtteranceId i = 0; i < n_left; ++i) ++sizes[oracle.component(i)];
    for (const auto& [root, s] : sizes) report.imputed_positive_pairs += choose2(s);
  } else {
    report.imputed_positive_pairs = positive_keys.size();
  }

  Corpus corpus = mode == PairMode::kSymmetric
                      ? Corpus(mode, std::move(left_texts))
                      : Corpus(mode, std::move(left_texts), std::move(right_texts));
  return {std::move(corpus), std::move(stated), std::move(oracle), report};
}

IngestResult ingest(const std::filesystem::path& utterance_file,
                    const std::filesystem::path& pairs_file, PairMode mode) {
  std::ifstream utt(utterance_file);
  if (!utt) throw Error(ErrorCode::kIo, "cannot open " + utterance_file.string());
  std::ifstream prs(pairs_file);
  if (!prs) throw Error(ErrorCode::kIo, "cannot open " + pairs_file.string());
  return ingest(utt, prs, mode);
}

void write_utterances(std::ostream& out, const Corpus& corpus) {
  for (const auto& u : corpus.utterances()) {
    out << u.id << '\t' << to_string(u.side) << '\t' << u.text << '\n';
  }
}

void write_pairs(std::ostream& out, std::span<const StatedPair> pairs) {
  for (const auto& p : pairs) out << p.key.a << '\t' << p.key.b << '\t' << p.label << '\n';
}

// ---------------------------------------------------------------- split_corpus

SplitSpec split_corpus(const Corpus& corpus, const StatedDataset& stated,
                       std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "split fractions must be >= 0");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split fractions must sum to 1");
  }

  const std::size_t n = corpus.left_size();
  UnionFind forest(n);
  if (corpus.mode() == PairMode::kSymmetric) {
    for (const auto& p : stated.pairs) forest.unite(p.key.a, p.key.b);
  } else {
    // Questions sharing a paired sentence travel together.
    std::map<UtteranceId, UtteranceId> first_partner;
    for (const auto& p : stated.pairs) {
      auto [it, inserted] = first_partner.emplace(p.key.b, p.key.a);
      if (!inserted) forest.unite(it->second, p.key.a);
    }
  }

  std::vector<std::vector<UtteranceId>> components;
  std::map<std::uint32_t, std::size_t> slot;
  for (UtteranceId i = 0; i < n; ++i) {
    auto [it, inserted] = slot.emplace(forest.find(i), components.size());
    if (inserted) components.emplace_back();
    components[it->second].push_back(i);
  }

  Rng rng(seed);
  rng.shuffle(std::span(components));

  std::array<double, 3> target{};
  for (std::size_t s = 0; s < 3; ++s) target[s] = fractions[s] * static_cast<double>(n);
  const auto largest = static_cast<std::size_t>(
      std::max_element(fractions.begin(), fractions.end()) - fractions.begin());

  std::array<double, 3> assigned{};
  std::vector<Split> assignment(n, Split::kTrain);
  for (const auto& comp : components) {
    std::size_t pick = 0;
    if (static_cast<double>(comp.size()) > target[largest]) {
      spdlog::warn("split: component of size {} exceeds the largest split target {:.1f}",
                   comp.size(), target[largest]);
      pick = largest;
    } else {
      double best = -1e300;
      for (std::size_t s = 0; s < 3; ++s) {
        if (fractions[s] <= 0.0) continue;
        const double deficit = target[s] - assigned[s];
        if (deficit > best) {
          best = deficit;
          pick = s;
        }
      }
    }
    assigned[pick] += static_cast<double>(comp.size());
    for (UtteranceId id : comp) assignment[id] = static_cast<Split>(pick);
  }
  return SplitSpec(corpus.mode(), std::move(assignment), corpus.right_size());
}

// ---------------------------------------------------------------- gen_synthetic

namespace {

constexpr std::array<std::string_view, 20> kSyllables = {
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "be",
    "da", "fe", "gi", "ho", "ju", "ke", "la", "mo", "ni", "po"};

std::string make_word(std::size_t index) {
  std::string word;
  std::size_t x = index;
  for (int k = 0; k < 3 || x > 0; ++k) {
    word += kSyllables[x % kSyllables.size()];
    x /= kSyllables.size();
  }
  return word;
}

// Picks `count` distinct elements of `pool` (partial Fisher-Yates on a copy).
std::vector<std::size_t> pick_distinct(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

SyntheticCorpus gen_synthetic(std::size_t n_clusters, std::size_t cluster_size,
                              std::size_t n_distractors, const SyntheticVocab& vocab,
                              std::uint64_t seed) {
  if (n_clusters < 1 || cluster_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "cluster counts must be >= 1");
  }
  if (vocab.concepts_per_cluster < 1 || vocab.synonyms_per_concept < 1 ||
      vocab.concepts_per_cluster > vocab.n_concepts ||
      vocab.template_per_utterance > vocab.template_length || vocab.n_templates < 1 ||
      (vocab.fillers_per_utterance > 0 && vocab.filler_vocab < 1) ||
      vocab.home_template_prob < 0.0 || vocab.home_template_prob > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "inconsistent synthetic vocabulary configuration");
  }
  const std::size_t units = n_clusters + n_distractors;
  // Every unit needs its own concept set: C(n_concepts, concepts_per_cluster) >= units,
  // with room to spare so rejection sampling terminates quickly.
  {
    long double combos = 1.0L;
    for (std::size_t k = 0; k < vocab.concepts_per_cluster; ++k) {
      combos = combos * static_cast<long double>(vocab.n_concepts - k) / static_cast<long double>(k + 1);
    }
    if (combos < 2.0L * static_cast<long double>(units)) {
      throw Error(ErrorCode::kVocabularyTooSmall,
                  std::to_string(vocab.n_concepts) + " concepts cannot give " +
                      std::to_string(units) + " units distinct sets of " +
                      std::to_string(vocab.concepts_per_cluster));
    }
  }

  Rng rng(seed);
  const std::size_t template_base = vocab.n_concepts * vocab.synonyms_per_concept;
  const std::size_t filler_base = template_base + vocab.n_templates * vocab.template_length;

  std::vector<std::size_t> all_concepts(vocab.n_concepts);
  std::iota(all_concepts.begin(), all_concepts.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> concepts_of(units);
  std::set<std::vector<std::size_t>> taken;
  for (auto& concepts : concepts_of) {
    do {
      concepts = pick_distinct(all_concepts, vocab.concepts_per_cluster, rng);
      std::sort(concepts.begin(), concepts.end());
    } while (!taken.insert(concepts).second);
  }

  struct Draft {
    std::string text;
    std::size_t unit;
    std::size_t template_id;
  };
  std::vector<Draft> drafts;
  drafts.reserve(n_clusters * cluster_size + n_distractors);

  auto compose = [&](std::size_t unit, std::size_t template_id) {
    std::vector<std::size_t> words;
    for (std::size_t c : concepts_of[unit]) {
      words.push_back(c * vocab.synonyms_per_concept + rng.below(vocab.synonyms_per_concept));
    }
    std::vector<std::size_t> template_pool(vocab.template_length);
    for (std::size_t k = 0; k < vocab.template_length; ++k) {
      template_pool[k] = template_base + template_id * vocab.template_length + k;
    }
    for (std::size_t w : pick_distinct(template_pool, vocab.template_per_utterance, rng)) {
      words.push_back(w);
    }
    for (std::size_t k = 0; k < vocab.fillers_per_utterance; ++k) {
      words.push_back(filler_base + rng.below(vocab.filler_vocab));
    }
    rng.shuffle(std::span(words));
    std::string text;
    for (std::size_t w : words) {
      if (!text.empty()) text += ' ';
      text += make_word(w);
    }
    drafts.push_back({std::move(text), unit, template_id});
  };

  for (std::size_t c = 0; c < n_clusters; ++c) {
    const std::size_t home = rng.below(vocab.n_templates);
    for (std::size_t j = 0; j < cluster_size; ++j) {
      const bool use_home = rng.uniform() < vocab.home_template_prob;
      compose(c, use_home ? home : rng.below(vocab.n_templates));
    }
  }
  for (std::size_t d = 0; d < n_distractors; ++d) {
    compose(n_clusters + d, rng.below(vocab.n_templates));
  }

  // Random id assignment so clusters are not contiguous.
  std::vector<UtteranceId> id_of(drafts.size());
  std::iota(id_of.begin(), id_of.end(), UtteranceId{0});
  rng.shuffle(std::span(id_of));

  std::vector<std::string> texts(drafts.size());
  std::vector<std::size_t> unit_of(drafts.size());
  std::vector<std::vector<UtteranceId>> by_template(vocab.n_templates);
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    texts[id_of[i]] = drafts[i].text;
    unit_of[id_of[i]] = drafts[i].unit;
    by_template[drafts[i].template_id].push_back(id_of[i]);
  }
  for (auto& ids : by_template) std::sort(ids.begin(), ids.end());

  std::vector<PairKey> edges;
  StatedDataset stated;
  std::map<PairKey, int> stated_labels;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (std::size_t j = 1; j < cluster_size; ++j) {
      const auto key = PairKey::canonical(id_of[c * cluster_size + j - 1], id_of[c * cluster_size + j]);
      edges.push_back(key);
      stated_labels[key] = 1;
    }
  }
  for (std::size_t i = 0; i < n_clusters * cluster_size; ++i) {
    const auto& pool = by_template[drafts[i].template_id];
    for (std::size_t k = 0; k < vocab.stated_negatives_per_member; ++k) {
      const UtteranceId other = pool[rng.below(pool.size())];
      if (unit_of[other] == drafts[i].unit) continue;
      stated_labels.emplace(PairKey::canonical(id_of[i], other), 0);
    }
  }
  for (const auto& [key, label] : stated_labels) stated.pairs.push_back({key, label});

  LabelOracle oracle = LabelOracle::symmetric(texts.size(), edges);
  return {Corpus(PairMode::kSymmetric, std::move(texts)), std::move(stated), std::move(oracle)};
}

// ---------------------------------------------------------------- sampling

std::vector<PairKey> sample_random_pairs(const PairSpace& space, std::uint64_t count,
                                         const PairSet& exclude, std::uint64_t seed) {
  std::uint64_t excluded_inside = 0;
  for (const auto& key : exclude) {
    if (space.contains(key)) ++excluded_inside;
  }
  const std::uint64_t total = space.size();
  const std::uint64_t available = total - excluded_inside;
  if (count > available) {
    throw Error(ErrorCode::kCountTooLarge, "requested " + std::to_string(count) +
                                               " pairs but only " + std::to_string(available) +
                                               " are available");
  }
  std::vector<PairKey> out;
  if (count == 0) return out;
  out.reserve(count);
  Rng rng(seed);

  constexpr std::uint64_t kDenseLimit = 50'000'000;
  if (total <= kDenseLimit && total <= 4 * (count + excluded_inside)) {
    std::vector<std::uint64_t> indices;
    indices.reserve(available);
    for (std::uint64_t k = 0; k < total; ++k) {
      if (exclude.empty() || !exclude.contains(space.unrank(k))) indices.push_back(k);
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t j = i + rng.below(indices.size() - i);
      std::swap(indices[i], indices[j]);
      out.push_back(space.unrank(indices[i]));
    }
    return out;
  }

  std::unordered_set<std::uint64_t> taken;
  while (out.size() < count) {
    const std::uint64_t k = rng.below(total);
    if (taken.contains(k)) continue;
    const PairKey key = space.unrank(k);
    if (exclude.contains(key)) continue;
    taken.insert(k);
    out.push_back(key);
  }
  return out;
}

}  // namespace pairal
