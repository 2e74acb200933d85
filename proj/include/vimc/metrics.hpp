#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace vimc::metrics {

struct Classification {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
};

/// Accuracy and the unweighted mean of per-class F1 over the four labels
/// (a class's F1 is 0 when its precision + recall is 0).
Classification classification_metrics(const std::vector<int>& gold, const std::vector<int>& predicted);

struct Generation {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // items with an empty reference
};

using Tokens = std::vector<std::string>;

/// Epsilon used in place of a zero matched n-gram count (orders 2-4).
inline constexpr double kBleuEpsilon = 0.1;

/// Corpus BLEU-4 with brevity penalty. A zero matched count for orders 2-4
/// is replaced by kBleuEpsilon; zero unigram matches give BLEU 0.
double corpus_bleu4(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// Balanced (beta = 1) LCS F-measure.
double rouge_l(const Tokens& hypothesis, const Tokens& reference);

/// BLEU-4 over the corpus and mean sentence ROUGE-L; pairs with an empty
/// reference are skipped and counted.
Generation generation_metrics(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references);

}  // namespace vimc::metrics
