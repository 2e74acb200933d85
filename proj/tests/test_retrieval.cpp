#include <gtest/gtest.h>

#include <cmath>

#include "vimc/retrieval.hpp"

using namespace vimc;
using namespace vimc::retrieval;

namespace {

SentenceUnit unit(int id, Subject s, const std::string& text) {
  SentenceUnit u;
  u.id = id;
  u.subject = s;
  u.text = text;
  return u;
}

RankedList ranked(std::initializer_list<int> ids) {
  std::vector<ScoredUnit> v;
  double s = 100.0;
  for (int id : ids) v.push_back({id, s--});
  return make_ranked(v);
}

// Okapi BM25 written out term by term for a single partition.
double bm25_oracle(const std::vector<std::vector<std::string>>& docs, std::size_t target,
                   const std::vector<std::string>& query) {
  const double k1 = 1.2;
  const double b = 0.75;
  const double n = static_cast<double>(docs.size());
  double avg = 0.0;
  for (const auto& d : docs) avg += static_cast<double>(d.size());
  avg /= n;
  double score = 0.0;
  for (const auto& q : query) {
    double df = 0.0;
    for (const auto& d : docs) df += std::count(d.begin(), d.end(), q) > 0 ? 1.0 : 0.0;
    const double tf = static_cast<double>(std::count(docs[target].begin(), docs[target].end(), q));
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double len = static_cast<double>(docs[target].size());
    score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
  }
  return score;
}

}  // namespace

TEST(Segment, Terminators) {
  EXPECT_EQ(segment_corpus("A. B. C.", Subject::History).size(), 3u);
  EXPECT_EQ(segment_corpus("no terminator here", Subject::History).size(), 1u);
  const auto units = segment_corpus("One! Two? Three... Four. Five", Subject::Geography, 10);
  ASSERT_EQ(units.size(), 5u);
  EXPECT_EQ(units[0].id, 10);
  EXPECT_EQ(units[2].text, "Three...");
  EXPECT_EQ(units[4].subject, Subject::Geography);
}

TEST(Segment, DecimalPointDoesNotSplit) {
  EXPECT_EQ(segment_corpus("Pi is 3.14 roughly. Next one.", Subject::History).size(), 2u);
}

TEST(Bm25, HandComputedLn2) {
  const SparseIndex idx({unit(1, Subject::History, "a b"), unit(2, Subject::History, "c d")});
  EXPECT_NEAR(idx.bm25_score({"a"}, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(idx.bm25_score({"a"}, 1), 0.693147, 1e-6);
  EXPECT_EQ(idx.bm25_score({"a"}, 2), 0.0);
}

TEST(Bm25, MatchesTermwiseOracle) {
  const std::vector<std::string> texts{"the river delta floods", "the delta the delta rice", "mountain pass",
                                       "rice and river and rice"};
  std::vector<SentenceUnit> units;
  std::vector<std::vector<std::string>> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    units.push_back(unit(static_cast<int>(i), Subject::Geography, texts[i]));
    docs.push_back(default_tokenizer().split(texts[i]));
  }
  const SparseIndex idx(units);
  const std::vector<std::string> q{"delta", "rice", "river"};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    EXPECT_NEAR(idx.bm25_score(q, static_cast<int>(i)), bm25_oracle(docs, i, q), 1e-12);
  }
}

TEST(Bm25, TermFrequencyMonotone) {
  const SparseIndex one({unit(1, Subject::History, "a x y z"), unit(2, Subject::History, "c d")});
  const SparseIndex two({unit(1, Subject::History, "a a y z"), unit(2, Subject::History, "c d")});
  EXPECT_GT(two.bm25_score({"a"}, 1), one.bm25_score({"a"}, 1));
}

TEST(Bm25, TopKAndSubjectFilter) {
  const SparseIndex idx({unit(1, Subject::History, "a b"), unit(2, Subject::History, "c d"),
                         unit(3, Subject::Geography, "a a")});
  const auto top1 = idx.retrieve_topk({"a"}, 1, Subject::History);
  ASSERT_EQ(top1.size(), 1u);
  EXPECT_EQ(top1.entries[0].unit_id, 1);
  EXPECT_EQ(idx.retrieve_topk({"a"}, 50, Subject::History).size(), 2u);
  EXPECT_TRUE(idx.retrieve_topk({"a"}, 5, Subject::Literature).empty());
  EXPECT_THROW(idx.retrieve_topk({"a"}, 0, Subject::History), std::invalid_argument);
}

TEST(Dense, QueryVectorIsMean) {
  std::unordered_map<std::string, Eigen::VectorXd> table;
  const std::array<std::string, 4> opts{"o1", "o2", "o3", "o4"};
  for (int i = 0; i < 5; ++i) table[i == 0 ? "q" : opts[static_cast<std::size_t>(i - 1)]] = Eigen::VectorXd::Unit(5, i);
  const TableEmbedder emb(5, table);
  const auto v = dense_query_vector("q", opts, emb);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(v(i), 0.2, 1e-15);

  std::unordered_map<std::string, Eigen::VectorXd> same;
  Eigen::VectorXd w(3);
  w << 0.3, -1.0, 2.5;
  for (const auto& k : {"q", "o1", "o2", "o3", "o4"}) same[k] = w;
  const auto u = dense_query_vector("q", opts, TableEmbedder(3, same));
  EXPECT_TRUE(u.isApprox(w, 1e-15));
}

TEST(Dense, HashingEmbedderNormalizedAndDeterministic) {
  const HashingEmbedder emb(32);
  const auto a = emb.embed("the red river");
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_EQ(a, emb.embed("the red river"));
  EXPECT_EQ(emb.embed("").norm(), 0.0);
}

TEST(Dense, CosineRanking) {
  const std::vector<SentenceUnit> units{unit(1, Subject::History, "x"), unit(2, Subject::History, "y")};
  std::unordered_map<int, Eigen::VectorXd> vecs;
  vecs[1] = Eigen::Vector2d(1.0, 0.0);
  vecs[2] = Eigen::Vector2d(0.6, 0.8);
  const DenseIndex idx(units, vecs);
  const auto r = idx.retrieve_topk(Eigen::Vector2d(0.0, 1.0), 2, Subject::History);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.entries[0].unit_id, 2);
  EXPECT_NEAR(r.entries[0].score, 0.8, 1e-15);
}

TEST(Rrf, HandComputedScores) {
  const auto fused = rrf_fuse({ranked({7, 8}), ranked({7})});
  ASSERT_EQ(fused.size(), 2u);
  EXPECT_EQ(fused.entries[0].unit_id, 7);
  EXPECT_NEAR(fused.entries[0].score, 2.0 / 61.0, 1e-15);
  EXPECT_NEAR(fused.entries[0].score, 0.0327869, 1e-6);
  EXPECT_NEAR(fused.entries[1].score, 1.0 / 62.0, 1e-15);
  EXPECT_NEAR(fused.entries[1].score, 0.0161290, 1e-6);
}

TEST(Rrf, IdenticalListsPreserveOrder) {
  const auto l = ranked({5, 3, 9, 1});
  EXPECT_EQ(rrf_fuse({l, l}).ids(), l.ids());
}

TEST(Rrf, ListOrderIrrelevant) {
  const auto a = ranked({1, 2, 3});
  const auto b = ranked({3, 4, 1});
  const auto c = ranked({4, 2});
  EXPECT_EQ(rrf_fuse({a, b, c}), rrf_fuse({c, a, b}));
}

TEST(PrecisionRecallAtK, Cases) {
  const auto r = ranked({1, 2, 3, 4});
  auto m = retrieval_metrics(r, {"q", {1}}, 3);
  ASSERT_TRUE(m);
  EXPECT_NEAR(m->precision, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(m->recall, 1.0);
  m = retrieval_metrics(r, {"q", {9}}, 3);
  EXPECT_EQ(m->precision, 0.0);
  EXPECT_EQ(m->recall, 0.0);
  m = retrieval_metrics(r, {"q", {1, 2, 3}}, 3);
  EXPECT_EQ(m->precision, 1.0);
  EXPECT_EQ(m->recall, 1.0);
  EXPECT_FALSE(retrieval_metrics(r, {"q", {}}, 3));
}

TEST(Context, ConcatenateAndCap) {
  std::vector<SentenceUnit> units;
  std::string ten;
  for (int i = 0; i < 10; ++i) ten += "w" + std::to_string(i) + " ";
  units.push_back(unit(1, Subject::History, ten));
  units.push_back(unit(2, Subject::History, ten));
  std::unordered_map<int, const SentenceUnit*> lookup{{1, &units[0]}, {2, &units[1]}};
  const auto two = build_context(ranked({1, 2}), lookup, 15, 400);
  EXPECT_EQ(two.tokens, 20u);

  std::vector<SentenceUnit> big;
  std::string ninety;
  for (int i = 0; i < 90; ++i) ninety += "t ";
  for (int i = 0; i < 5; ++i) big.push_back(unit(i, Subject::History, ninety));
  std::unordered_map<int, const SentenceUnit*> big_lookup;
  for (auto& u : big) big_lookup[u.id] = &u;
  const auto capped = build_context(ranked({0, 1, 2, 3, 4}), big_lookup, 15, 400);
  EXPECT_EQ(capped.tokens, 400u);
  EXPECT_TRUE(build_context({}, lookup).empty);
}

TEST(Harness, FixtureCorpusReport) {
  auto units = load_corpus(std::string(VIMC_FIXTURES) + "/corpus.jsonl");
  ASSERT_EQ(units.size(), 50u);
  const Retriever retriever(units, std::make_shared<HashingEmbedder>(64));
  const auto items = load_dataset(std::string(VIMC_FIXTURES) + "/queries.jsonl");
  std::vector<Query> queries;
  for (const auto& it : items) queries.push_back(query_of(it));
  const auto judgments = load_judgments(std::string(VIMC_FIXTURES) + "/judgments.jsonl");
  const auto report = evaluate_retrieval(retriever, queries, judgments, {10, 15, 20, 30});
  EXPECT_TRUE(report.consistent);
  EXPECT_EQ(report.evaluated, 18u);
  ASSERT_EQ(report.flagged.size(), 1u);
  EXPECT_EQ(report.flagged[0], "r19");
  EXPECT_EQ(report.cells.size(), 12u);
  EXPECT_GT(report.cells.at({Mode::Sparse, 10}).recall, 0.5);
}

TEST(Harness, AttachUsesDefaultK) {
  auto units = load_corpus(std::string(VIMC_FIXTURES) + "/corpus.jsonl");
  const Retriever retriever(units, std::make_shared<HashingEmbedder>(64));
  auto items = load_dataset(std::string(VIMC_FIXTURES) + "/queries.jsonl");
  const auto r = retriever.attach_context(items[0], 15, 400, Mode::Rrf);
  ASSERT_TRUE(items[0].context.has_value());
  EXPECT_FALSE(r.empty);
  EXPECT_NE(items[0].context->find("kieu"), std::string::npos);
}
