#include <gtest/gtest.h>

#include "checks.hpp"

using namespace vimc::checks;

TEST(Properties, PhrasalMatrix) {
  const auto r = phrasal_suite(200, 101);
  EXPECT_TRUE(r.ok()) << r.first_failure;
  EXPECT_EQ(r.cases, 200u);
}

TEST(Properties, AttentionRowsStochastic) {
  const auto r = attention_suite(5, 202);
  EXPECT_TRUE(r.ok()) << r.first_failure;
  EXPECT_LE(r.worst, 1e-9);
}

TEST(Properties, OptionPermutationEquivariance) {
  const auto r = permutation_suite(3, 303);
  EXPECT_TRUE(r.ok()) << r.first_failure;
  EXPECT_EQ(r.cases, 72u);
}
