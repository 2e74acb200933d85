#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "vimc/data.hpp"
#include "vimc/synth.hpp"

using namespace vimc;

namespace {

McqItem sample_item(const std::string& id = "q1", int answer = 0) {
  McqItem it;
  it.id = id;
  it.subject = Subject::History;
  it.grade = 11;
  it.question = "who led the uprising ?";
  it.options = {"alpha beta", "gamma", "delta epsilon", "zeta"};
  it.answer = answer;
  return it;
}

TokenSequence ids_of_length(int n) {
  TokenSequence s;
  for (int i = 0; i < n; ++i) {
    s.ids.push_back(kNumReserved + i);
    s.surface.push_back("w" + std::to_string(i));
  }
  return s;
}

}  // namespace

TEST(LoadDataset, TwoItemsInOrder) {
  std::stringstream in;
  in << to_json_line(sample_item("first", 2)) << "\n\n" << to_json_line(sample_item("second", 1)) << "\n";
  const auto items = parse_dataset(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "first");
  EXPECT_EQ(items[1].id, "second");
  EXPECT_EQ(items[0], sample_item("first", 2));
}

TEST(LoadDataset, LetterAnswers) {
  std::stringstream in(
      R"({"id":"x","subject":"Geography","grade":10,"question":"q","options":["a","b","c","d"],"answer":"C"})");
  const auto items = parse_dataset(in);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].answer, 2);
  EXPECT_EQ(items[0].subject, Subject::Geography);
}

TEST(LoadDataset, ThreeOptionsNamesTheItem) {
  std::stringstream in(R"({"id":"bad-7","subject":"History","grade":10,"question":"q","options":["a","b","c"],"answer":0})");
  try {
    parse_dataset(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.item_id(), "bad-7");
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(LoadDataset, AnswerFourRejected) {
  std::stringstream in(R"({"id":"a4","subject":"History","grade":10,"question":"q","options":["a","b","c","d"],"answer":4})");
  try {
    parse_dataset(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.reason(), "answer out of range");
    EXPECT_EQ(e.item_id(), "a4");
  }
}

TEST(LoadDataset, DuplicateIdsRejected) {
  std::stringstream in;
  in << to_json_line(sample_item("dup")) << "\n" << to_json_line(sample_item("dup")) << "\n";
  EXPECT_THROW(parse_dataset(in), DataError);
}

TEST(Validate, EmptyOptionRejected) {
  auto it = sample_item();
  it.options[3] = "";
  EXPECT_THROW(validate(it), DataError);
}

TEST(Validate, GradeOutsideRange) {
  auto it = sample_item();
  it.grade = 9;
  EXPECT_THROW(validate(it), DataError);
}

TEST(Shuffle, IdentityPermutationUnchanged) {
  const auto it = sample_item("x", 3);
  EXPECT_EQ(apply_permutation(it, {0, 1, 2, 3}), it);
}

TEST(Shuffle, KnownPermutationRemapsAnswer) {
  const auto it = sample_item("x", 0);
  const auto out = apply_permutation(it, {2, 0, 1, 3});
  EXPECT_EQ(out.answer, 1);
  EXPECT_EQ(out.options[static_cast<std::size_t>(out.answer)], it.options[0]);
  EXPECT_EQ(out.options[0], it.options[2]);
}

TEST(Shuffle, InverseRestores) {
  const auto it = sample_item("x", 2);
  const OptionPermutation p{3, 1, 0, 2};
  EXPECT_EQ(apply_permutation(apply_permutation(it, p), invert(p)), it);
}

TEST(Shuffle, MonteCarloUniformLabels) {
  std::vector<McqItem> items;
  for (int i = 0; i < 10000; ++i) items.push_back(sample_item("m" + std::to_string(i), 0));
  const auto shuffled = debias_shuffle(items, 2024);
  std::vector<McqItem> out;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    EXPECT_EQ(shuffled[i].item.options[static_cast<std::size_t>(shuffled[i].item.answer)], items[i].options[0]);
    out.push_back(shuffled[i].item);
  }
  const auto dist = option_distribution(out);
  for (auto c : dist) {
    const double f = static_cast<double>(c) / 10000.0;
    EXPECT_GE(f, 0.23);
    EXPECT_LE(f, 0.27);
  }
}

TEST(Shuffle, SameSeedSameOutput) {
  const auto items = synth::synth_generate(50, 5);
  const auto a = debias_shuffle(items, 77);
  const auto b = debias_shuffle(items, 77);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].item, b[i].item);
    EXPECT_EQ(a[i].permutation, b[i].permutation);
  }
}

TEST(OptionDistribution, Counts) {
  EXPECT_EQ(option_distribution({}), (std::array<std::size_t, 4>{0, 0, 0, 0}));
  std::vector<McqItem> items;
  for (int a : {0, 0, 1, 2, 3}) items.push_back(sample_item("i" + std::to_string(items.size()), a));
  EXPECT_EQ(option_distribution(items), (std::array<std::size_t, 4>{2, 1, 1, 1}));
}

TEST(Tokenize, EmptyText) {
  Vocabulary v;
  EXPECT_TRUE(tokenize("", v).empty());
}

TEST(Tokenize, KnownWordsAndUnk) {
  Vocabulary v;
  const int a = v.add("hanoi");
  const int b = v.add("river");
  const auto seq = tokenize("Hanoi river", v);
  EXPECT_EQ(seq.ids, (std::vector<int>{a, b}));
  const auto unk = tokenize("hanoi mekong river", v);
  EXPECT_EQ(std::count(unk.ids.begin(), unk.ids.end(), kUnk), 1);
  EXPECT_EQ(unk.surface[1], "mekong");
}

TEST(Tokenize, PunctuationSplit) {
  const auto parts = default_tokenizer().split("Sông Hồng, chảy qua.");
  EXPECT_EQ(parts, (std::vector<std::string>{"sông", "hồng", ",", "chảy", "qua", "."}));
}

TEST(Vocabulary, ReservedAndFingerprint) {
  Vocabulary a;
  EXPECT_EQ(a.size(), kNumReserved);
  Vocabulary b;
  a.add("x");
  b.add("y");
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.add("x"), kNumReserved);
}

TEST(Truncate, Caps) {
  EXPECT_EQ(truncate(ids_of_length(80), 80).size(), 80u);
  const auto ctx = truncate(ids_of_length(401), 400);
  EXPECT_EQ(ctx.size(), 400u);
  EXPECT_EQ(ctx.ids.back(), kNumReserved + 399);
  EXPECT_EQ(truncate(ids_of_length(25), 20).size(), 20u);
}

TEST(Truncate, ItemKeepsPrefixes) {
  TokenizedItem it;
  it.question = ids_of_length(90);
  it.context = ids_of_length(401);
  for (auto& o : it.options) o = ids_of_length(25);
  const auto out = truncate_item(it, TruncationCaps{});
  EXPECT_EQ(out.question.size(), 80u);
  EXPECT_EQ(out.context.size(), 400u);
  for (const auto& o : out.options) EXPECT_EQ(o.size(), 20u);
  EXPECT_EQ(out.context.ids.front(), it.context.ids.front());
}

TEST(Truncate, InvalidCaps) { EXPECT_THROW(validate(TruncationCaps{0, 80, 20}), std::invalid_argument); }
