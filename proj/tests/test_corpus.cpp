#include <doctest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pairal/corpus.hpp"
#include "pairal/error.hpp"
#include "pairal/rng.hpp"

using namespace pairal;

namespace {

std::vector<UtteranceId> iota_ids(std::size_t n) {
  std::vector<UtteranceId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<UtteranceId>(i);
  return ids;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("symmetric pair space enumerates every unordered pair once") {
  Rng rng(7);
  for (std::size_t n : {0, 1, 2, 3, 7, 40, 100}) {
    // Sparse, unsorted ids exercise the id indirection.
    std::vector<UtteranceId> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<UtteranceId>(3 * i + 1));
    rng.shuffle(std::span(ids));
    const auto space = PairSpace::symmetric(ids);
    CHECK(space.size() == n * (n - 1) / 2);

    std::set<PairKey> expected;
    for (auto x : ids) {
      for (auto y : ids) {
        if (x < y) expected.insert({x, y});
      }
    }
    std::set<PairKey> seen;
    for (std::uint64_t k = 0; k < space.size(); ++k) {
      const auto key = space.unrank(k);
      CHECK(key.a < key.b);
      CHECK(space.rank(key) == k);
      seen.insert(key);
    }
    CHECK(seen == expected);
    if (n >= 2) {
      CHECK_FALSE(space.contains({ids[0], ids[0]}));
      CHECK_FALSE(space.contains({0, 1}));
    }
  }
}

TEST_CASE("pair space cardinality is exact up to 10^4 utterances") {
  for (std::uint64_t n : {2ULL, 10ULL, 999ULL, 4096ULL, 10000ULL}) {
    const auto space = PairSpace::symmetric(iota_ids(n));
    CHECK(space.size() == n * (n - 1) / 2);
    CHECK(space.unrank(0) == PairKey{0, 1});
    CHECK(space.unrank(space.size() - 1) ==
          PairKey{static_cast<UtteranceId>(n - 2), static_cast<UtteranceId>(n - 1)});
    Rng rng(n);
    for (int t = 0; t < 1000; ++t) {
      const auto k = rng.below(space.size());
      CHECK(space.rank(space.unrank(k)) == k);
    }
  }
}

TEST_CASE("bipartite pair space is the cross product") {
  const auto space = PairSpace::bipartite({0, 2, 5}, {1, 3});
  CHECK(space.size() == 6);
  std::set<PairKey> seen;
  space.for_each([&](PairKey k) { seen.insert(k); });
  CHECK(seen == std::set<PairKey>{{0, 1}, {0, 3}, {2, 1}, {2, 3}, {5, 1}, {5, 3}});
  CHECK(space.contains({5, 3}));
  CHECK_FALSE(space.contains({1, 0}));
  CHECK(space.contains_left(2));
  CHECK_FALSE(space.contains_right(2));
}

TEST_CASE("ingest: single positive among four utterances") {
  std::istringstream u("0\tSHARED\tw x\n1\tSHARED\tw y\n2\tSHARED\tz\n3\tSHARED\tq\n");
  std::istringstream p("0\t1\t1\n");
  const auto in = ingest(u, p, PairMode::kSymmetric);
  const auto space = PairSpace::symmetric(iota_ids(4));
  CHECK(space.size() == 6);
  CHECK(in.oracle.positives_in(space) == std::vector<PairKey>{{0, 1}});
  CHECK(in.report.stated_positives == 1);
}

TEST_CASE("ingest: closure makes chained positives transitive") {
  std::istringstream u("0\tSHARED\ta\n1\tSHARED\tb\n2\tSHARED\tc\n");
  std::istringstream p("0\t1\t1\n1\t2\t1\n# stated negative contradicted by closure\n2\t0\t0\n");
  const auto in = ingest(u, p, PairMode::kSymmetric);
  CHECK(in.oracle.label({0, 2}));
  CHECK(in.report.stated_negatives == 1);
  CHECK(in.report.stated_negatives_contradicted == 1);
  CHECK(in.report.imputed_positive_pairs == 3);
}

TEST_CASE("ingest: title column is prepended") {
  std::istringstream u("0\tLEFT\twhat is it\n0\tRIGHT\tit is this\tArticle\n");
  std::istringstream p("0\t0\t1\n");
  const auto in = ingest(u, p, PairMode::kBipartite);
  CHECK(in.corpus.right_text(0) == "Article . it is this");
  CHECK(in.oracle.label({0, 0}));
}

TEST_CASE("ingest errors carry line numbers") {
  auto run = [](std::string utt, std::string pairs, PairMode mode = PairMode::kSymmetric) {
    std::istringstream u(utt), p(pairs);
    return ingest(u, p, mode);
  };
  const std::string utts = "0\tSHARED\ta\n1\tSHARED\tb\n";
  CHECK(code_of([&] { run(utts, "0\t1\t1\n\n0\t7\t1\n"); }) == ErrorCode::kParse);
  CHECK(message_of([&] { run(utts, "0\t1\t1\n\n0\t7\t1\n"); }).find("pairs:3") != std::string::npos);
  CHECK(message_of([&] { run(utts, "0\t1\t1\n1\t0\t0\n"); }).find("conflicting") != std::string::npos);
  CHECK(code_of([&] { run(utts, "1\t1\t1\n"); }) == ErrorCode::kParse);
  CHECK(code_of([&] { run("0\tLEFT\ta\n", ""); }) == ErrorCode::kParse);
  CHECK(code_of([&] { run("0\tSHARED\ta\n2\tSHARED\tb\n", ""); }) == ErrorCode::kParse);
  // A consistent duplicate is fine.
  CHECK(run(utts, "0\t1\t1\n1\t0\t1\n").stated.pairs.size() == 1);
}

TEST_CASE("write/ingest round trip") {
  const auto syn = gen_synthetic(5, 3, 20, SyntheticVocab{}, 11);
  std::stringstream u, p;
  write_utterances(u, syn.corpus);
  write_pairs(p, syn.stated.pairs);
  const auto in = ingest(u, p, PairMode::kSymmetric);
  CHECK(in.corpus.fingerprint() == syn.corpus.fingerprint());
  CHECK(in.stated.pairs == syn.stated.pairs);
}

TEST_CASE("union-find oracle equals BFS components on a random 500-node graph") {
  Rng rng(500);
  const std::size_t n = 500;
  std::vector<PairKey> edges;
  for (int e = 0; e < 300; ++e) {
    const auto a = static_cast<UtteranceId>(rng.below(n));
    const auto b = static_cast<UtteranceId>(rng.below(n));
    if (a != b) edges.push_back(PairKey::canonical(a, b));
  }
  const auto oracle = LabelOracle::symmetric(n, edges);
  const auto comp = oracle::bfs_components(n, edges);
  std::size_t mismatches = 0;
  PairSpace::symmetric(iota_ids(n)).for_each([&](PairKey k) {
    mismatches += oracle.label(k) != (comp[k.a] == comp[k.b]);
  });
  CHECK(mismatches == 0);

  // Closure idempotence: adding every implied edge changes no label.
  std::vector<PairKey> closed = edges;
  PairSpace::symmetric(iota_ids(n)).for_each([&](PairKey k) {
    if (comp[k.a] == comp[k.b]) closed.push_back(k);
  });
  const auto again = LabelOracle::symmetric(n, closed);
  std::size_t changed = 0;
  PairSpace::symmetric(iota_ids(n)).for_each([&](PairKey k) { changed += oracle.label(k) != again.label(k); });
  CHECK(changed == 0);
}

TEST_CASE("split_corpus keeps components whole") {
  SUBCASE("small example") {
    Corpus corpus(PairMode::kSymmetric, {"a", "b", "c", "d"});
    StatedDataset stated{{{{0, 1}, 1}}};
    const auto split = split_corpus(corpus, stated, {0.5, 0.25, 0.25}, 3);
    CHECK(split.split_of(0) == split.split_of(1));
    std::array<int, 3> count{};
    for (auto s : split.assignment()) ++count[static_cast<int>(s)];
    CHECK(count == std::array<int, 3>{2, 1, 1});
  }
  SUBCASE("all train") {
    Corpus corpus(PairMode::kSymmetric, {"a"});
    const auto split = split_corpus(corpus, {}, {1.0, 0.0, 0.0}, 0);
    CHECK(split.split_of(0) == Split::kTrain);
  }
  SUBCASE("1000 utterances, random edges: no edge crosses splits") {
    const std::size_t n = 1000;
    std::vector<std::string> texts(n, "t");
    Corpus corpus(PairMode::kSymmetric, texts);
    Rng rng(1000);
    StatedDataset stated;
    std::set<PairKey> used;
    for (int e = 0; e < 400; ++e) {
      const auto a = static_cast<UtteranceId>(rng.below(n));
      const auto b = static_cast<UtteranceId>(rng.below(n));
      if (a == b || !used.insert(PairKey::canonical(a, b)).second) continue;
      stated.pairs.push_back({PairKey::canonical(a, b), static_cast<int>(rng.below(2))});
    }
    const auto split = split_corpus(corpus, stated, {0.6, 0.2, 0.2}, 9);
    std::size_t crossing = 0;
    for (const auto& p : stated.pairs) crossing += split.split_of(p.key.a) != split.split_of(p.key.b);
    CHECK(crossing == 0);
    const auto achieved = split.achieved_fractions();
    CHECK(achieved[0] == doctest::Approx(0.6).epsilon(0.05));
    // Determinism.
    const auto again = split_corpus(corpus, stated, {0.6, 0.2, 0.2}, 9);
    CHECK(std::equal(split.assignment().begin(), split.assignment().end(), again.assignment().begin()));
    // Stated pairs restricted to a split stay inside it.
    for (auto s : {Split::kTrain, Split::kDev, Split::kTest}) {
      const auto space = split.space(s);
      for (const auto& p : stated.restrict_to(space).pairs) CHECK(space.contains(p.key));
    }
  }
}

TEST_CASE("gen_synthetic counts, symmetry and determinism") {
  SUBCASE("10 clusters of 4") {
    const auto syn = gen_synthetic(10, 4, 0, SyntheticVocab{}, 1);
    const auto space = PairSpace::symmetric(iota_ids(syn.corpus.left_size()));
    CHECK(syn.oracle.positives_in(space).size() == 60);
  }
  SUBCASE("reference corpus: 50 x 4 + 1800 distractors") {
    const auto syn = gen_synthetic(50, 4, 1800, SyntheticVocab{}, 0);
    REQUIRE(syn.corpus.left_size() == 2000);
    const auto space = PairSpace::symmetric(iota_ids(2000));
    std::uint64_t positives = 0, asymmetric = 0;
    space.for_each([&](PairKey k) {
      const bool y = syn.oracle.label(k);
      positives += y;
      asymmetric += y != syn.oracle.label({k.b, k.a});
    });
    CHECK(space.size() == 1'999'000);
    CHECK(positives == 300);
    CHECK(asymmetric == 0);
  }
  SUBCASE("same-cluster texts overlap more than random pairs") {
    const auto syn = gen_synthetic(50, 4, 500, SyntheticVocab{}, 2);
    auto overlap = [&](PairKey k) {
      std::istringstream a(syn.corpus.left_text(k.a)), b(syn.corpus.left_text(k.b));
      std::set<std::string> wa{std::istream_iterator<std::string>(a), {}};
      std::set<std::string> wb{std::istream_iterator<std::string>(b), {}};
      std::size_t shared = 0;
      for (const auto& w : wa) shared += wb.count(w);
      return static_cast<double>(shared);
    };
    const auto space = PairSpace::symmetric(iota_ids(syn.corpus.left_size()));
    double pos = 0, neg = 0;
    std::size_t npos = 0, nneg = 0;
    space.for_each([&](PairKey k) {
      if (syn.oracle.label(k)) pos += overlap(k), ++npos;
      else if (k.b % 50 == 0) neg += overlap(k), ++nneg;
    });
    CHECK(pos / npos > 2.0 * (neg / nneg));
  }
  SUBCASE("byte-identical for the same seed") {
    const auto a = gen_synthetic(20, 3, 100, SyntheticVocab{}, 5);
    const auto b = gen_synthetic(20, 3, 100, SyntheticVocab{}, 5);
    std::ostringstream sa, sb;
    write_utterances(sa, a.corpus);
    write_pairs(sa, a.stated.pairs);
    write_utterances(sb, b.corpus);
    write_pairs(sb, b.stated.pairs);
    CHECK(sa.str() == sb.str());
  }
  SUBCASE("too few concepts is fatal") {
    SyntheticVocab small;
    small.n_concepts = 5;
    CHECK(code_of([&] { gen_synthetic(10, 2, 10, small, 0); }) == ErrorCode::kVocabularyTooSmall);
  }
}

TEST_CASE("sample_random_pairs: uniform, without replacement, honours exclusions") {
  const auto space = PairSpace::symmetric(iota_ids(15));  // 105 pairs
  SUBCASE("distinct and inside the space, both code paths") {
    PairSet exclude{{0, 1}, {2, 3}};
    for (std::uint64_t count : {5ULL, 103ULL}) {
      const auto s = sample_random_pairs(space, count, exclude, 4);
      CHECK(s.size() == count);
      std::set<PairKey> seen(s.begin(), s.end());
      CHECK(seen.size() == count);
      for (const auto& k : s) {
        CHECK(space.contains(k));
        CHECK_FALSE(exclude.contains(k));
      }
    }
    CHECK(code_of([&] { sample_random_pairs(space, 104, exclude, 4); }) == ErrorCode::kCountTooLarge);
  }
  SUBCASE("large space uses index decoding") {
    const auto big = PairSpace::symmetric(iota_ids(100000));
    const auto s = sample_random_pairs(big, 1000, {}, 8);
    CHECK(std::set<PairKey>(s.begin(), s.end()).size() == 1000);
  }
  SUBCASE("deterministic given seed") {
    CHECK(sample_random_pairs(space, 10, {}, 3) == sample_random_pairs(space, 10, {}, 3));
  }
}

TEST_CASE("sample_random_pairs single draws pass a chi-square uniformity test") {
  const auto space = PairSpace::bipartite(iota_ids(10), iota_ids(10));
  const int draws = 100000;
  std::vector<double> counts(space.size(), 0.0);
  for (int i = 0; i < draws; ++i) {
    const auto s = sample_random_pairs(space, 1, {}, static_cast<std::uint64_t>(i));
    counts[*space.rank(s[0])] += 1.0;
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(space.size());
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 0.001 quantile of chi-square with 99 degrees of freedom.
  CHECK(chi2 < 148.23035916510173);
}
