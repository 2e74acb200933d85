#pragma once

// Test-set evaluation: answer metrics, explanation metrics, breakdowns and
// the prediction file.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vimc/checkpoint.hpp"
#include "vimc/metrics.hpp"
#include "vimc/model.hpp"

namespace vimc {

struct BreakdownRow {
  std::string group;
  std::size_t count = 0;
  double accuracy = 0.0;
  double f1_macro = 0.0;
  bool operator==(const BreakdownRow&) const = default;
};

struct MetricReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::optional<double> bleu4;  // set when explanations were generated and referenced
  std::optional<double> rouge_l;
  std::size_t explanations_evaluated = 0;
  std::size_t explanations_skipped = 0;
  std::vector<BreakdownRow> by_subject;
  std::vector<BreakdownRow> by_grade;

  std::string table() const;
  bool operator==(const MetricReport&) const = default;
};

struct Evaluation {
  MetricReport report;
  std::vector<Prediction> predictions;
};

/// Fraction of test tokens found below which the data is treated as
/// belonging to another vocabulary.
inline constexpr double kMinVocabularyCoverage = 0.5;

class VocabularyMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Share of question/option/context tokens known to `vocab`.
double vocabulary_coverage(const std::vector<McqItem>& items, const Vocabulary& vocab);

Evaluation evaluate_prepared(const ViMultiChoice& model, const std::vector<PreparedItem>& items,
                             const Vocabulary& vocab, bool generate, const heads::DecodeOptions& decode = {});

/// Throws VocabularyMismatch when the checkpoint's vocabulary does not fit
/// the model or covers too little of the test data, or when `expected_vocab`
/// is given and differs from the checkpoint's.
Evaluation evaluate(const Checkpoint& ckpt, const std::vector<McqItem>& test, bool generate = true,
                    const heads::DecodeOptions& decode = {}, const Vocabulary* expected_vocab = nullptr);

/// {"id", "answer" (letter), "probabilities" [4], "explanation"} per line.
void write_predictions(std::ostream& out, const std::vector<Prediction>& predictions, const Vocabulary& vocab);
void write_predictions(const std::string& path, const std::vector<Prediction>& predictions, const Vocabulary& vocab);

}  // namespace vimc
