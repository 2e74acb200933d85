#include <gtest/gtest.h>

#include <cmath>

#include "vimc/metrics.hpp"
#include "vimc/random.hpp"

using namespace vimc::metrics;

namespace {

Tokens words(const std::string& s) {
  Tokens out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// O(2^n) subsequence search, only for short inputs.
std::size_t brute_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i)) sub.push_back(a[i]);
    std::size_t j = 0;
    for (const auto& w : b)
      if (j < sub.size() && sub[j] == w) ++j;
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

}  // namespace

TEST(Classification, Perfect) {
  const auto m = classification_metrics({0, 1, 2, 3}, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.f1_macro, 1.0);
}

TEST(Classification, AllZeroPredictions) {
  const auto m = classification_metrics({0, 1, 2, 3}, {0, 0, 0, 0});
  EXPECT_NEAR(m.accuracy, 0.25, 1e-12);
  EXPECT_NEAR(m.f1_macro, 0.1, 1e-12);
}

TEST(Classification, Disjoint) {
  const auto m = classification_metrics({0, 1, 2, 3}, {1, 2, 3, 0});
  EXPECT_EQ(m.accuracy, 0.0);
  EXPECT_EQ(m.f1_macro, 0.0);
}

TEST(Classification, Errors) {
  EXPECT_THROW(classification_metrics({0, 1}, {0}), std::invalid_argument);
  EXPECT_THROW(classification_metrics({4}, {0}), std::out_of_range);
}

TEST(Bleu, IdentityAndDisjoint) {
  const auto s = words("the red river flows to the sea");
  EXPECT_NEAR(corpus_bleu4({s}, {s}), 1.0, 1e-12);
  EXPECT_NEAR(rouge_l(s, s), 1.0, 1e-12);
  EXPECT_EQ(corpus_bleu4({words("a b c")}, {words("x y z")}), 0.0);
  EXPECT_EQ(rouge_l(words("a b c"), words("x y z")), 0.0);
}

TEST(Bleu, BrevityPenaltyCase) {
  const auto h = words("a b c d");
  const auto r = words("a b c d e");
  EXPECT_NEAR(corpus_bleu4({h}, {r}), std::exp(1.0 - 5.0 / 4.0), 1e-12);
  EXPECT_NEAR(corpus_bleu4({h}, {r}), 0.778801, 1e-6);
  EXPECT_NEAR(rouge_l(h, r), 0.888889, 1e-6);
}

TEST(Bleu, ClippedCounts) {
  // "the the the" vs "the cat": unigram precision clipped to 1/3.
  const auto h = words("the the the");
  const auto r = words("the cat");
  const double p1 = 1.0 / 3.0;
  const double p2 = kBleuEpsilon / 2.0;
  const double p3 = kBleuEpsilon / 1.0;
  const double p4 = kBleuEpsilon / 1.0;  // no 4-grams: total taken as 1
  const double expected = std::exp((std::log(p1) + std::log(p2) + std::log(p3) + std::log(p4)) / 4.0);
  EXPECT_NEAR(corpus_bleu4({h}, {r}), expected, 1e-12);
}

TEST(Generation, SkipsEmptyReferences) {
  const auto g = generation_metrics({words("a b"), words("c")}, {words("a b"), {}});
  EXPECT_EQ(g.evaluated, 1u);
  EXPECT_EQ(g.skipped, 1u);
  EXPECT_NEAR(g.rouge_l, 1.0, 1e-12);
}

TEST(Lcs, MatchesBruteForce) {
  vimc::Rng rng(11);
  const Tokens alphabet{"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    Tokens a, b;
    const auto na = rng.bounded(9);
    const auto nb = rng.bounded(9);
    for (std::uint64_t i = 0; i < na; ++i) a.push_back(alphabet[rng.bounded(4)]);
    for (std::uint64_t i = 0; i < nb; ++i) b.push_back(alphabet[rng.bounded(4)]);
    ASSERT_EQ(lcs_length(a, b), brute_lcs(a, b));
  }
}
