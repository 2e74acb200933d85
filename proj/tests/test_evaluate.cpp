#include <gtest/gtest.h>

#include <sstream>

#include "vimc/evaluate.hpp"
#include "vimc/synth.hpp"
#include "vimc/train.hpp"

#include "json.hpp"

using namespace vimc;

namespace {

const TrainResult& trained() {
  static const TrainResult r = [] {
    TrainConfig c;
    c.d_model = 16;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.learning_rate = 1e-3;
    c.batch_size = 8;
    c.max_epochs = 2;
    return train(c, synth::synth_generate(24, 17));
  }();
  return r;
}

heads::DecodeOptions short_decode() {
  heads::DecodeOptions d;
  d.max_len = 10;
  return d;
}

}  // namespace

TEST(Evaluate, SingleSubjectBreakdownEqualsOverall) {
  auto test = synth::synth_generate(12, 40);
  for (auto& it : test) it.subject = Subject::Geography;
  const auto ev = evaluate(trained().best, test, false);
  ASSERT_EQ(ev.report.by_subject.size(), 1u);
  EXPECT_EQ(ev.report.by_subject[0].count, ev.report.count);
  EXPECT_EQ(ev.report.by_subject[0].accuracy, ev.report.accuracy);
  EXPECT_EQ(ev.report.by_subject[0].f1_macro, ev.report.f1_macro);
  EXPECT_FALSE(ev.report.bleu4.has_value());
}

TEST(Evaluate, RerunIsBitwiseIdentical) {
  const auto test = synth::synth_generate(10, 41);
  EXPECT_EQ(evaluate(trained().best, test, true, short_decode()).report,
            evaluate(trained().best, test, true, short_decode()).report);
}

TEST(Evaluate, GradeRecombination) {
  const auto test = synth::synth_generate(30, 42);
  const auto ev = evaluate(trained().best, test, false);
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& row : ev.report.by_grade) {
    weighted += row.accuracy * static_cast<double>(row.count);
    total += row.count;
  }
  EXPECT_EQ(total, ev.report.count);
  EXPECT_NEAR(weighted / static_cast<double>(total), ev.report.accuracy, 1e-12);
}

TEST(Evaluate, GenerationMetricsPresent) {
  const auto test = synth::synth_generate(6, 43);
  const auto ev = evaluate(trained().best, test, true, short_decode());
  ASSERT_TRUE(ev.report.bleu4.has_value());
  EXPECT_EQ(ev.report.explanations_evaluated, 6u);
  EXPECT_GE(*ev.report.bleu4, 0.0);
  EXPECT_LE(*ev.report.rouge_l, 1.0);
}

TEST(Evaluate, VocabularyMismatch) {
  const auto test = synth::synth_generate(6, 44);
  Vocabulary other;
  other.add("unrelated");
  EXPECT_THROW(evaluate(trained().best, test, false, {}, &other), VocabularyMismatch);

  // Data drawn from a disjoint lexicon is mostly unknown to the vocabulary.
  auto foreign = test;
  for (auto& it : foreign) {
    it.question = "qqq rrr sss ttt uuu vvv";
    it.context = "aaa1 bbb1 ccc1 ddd1 eee1 fff1 ggg1 hhh1";
    for (auto& o : it.options) o = "zzz1 yyy1";
  }
  EXPECT_LT(vocabulary_coverage(foreign, trained().best.vocab), kMinVocabularyCoverage);
  EXPECT_THROW(evaluate(trained().best, foreign, false), VocabularyMismatch);
}

TEST(Evaluate, PredictionsFile) {
  const auto test = synth::synth_generate(3, 45);
  const auto ev = evaluate(trained().best, test, true, short_decode());
  std::stringstream out;
  write_predictions(out, ev.predictions, trained().best.vocab);
  std::string line;
  int n = 0;
  while (std::getline(out, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("probabilities").size(), 4u);
    const auto letter = j.at("answer").get<std::string>();
    EXPECT_TRUE(letter >= "A" && letter <= "D");
    double sum = 0.0;
    for (double p : j.at("probabilities")) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(Evaluate, ReportTableHasRows) {
  const auto ev = evaluate(trained().best, synth::synth_generate(8, 46), false);
  const auto table = ev.report.table();
  EXPECT_NE(table.find("overall"), std::string::npos);
}
