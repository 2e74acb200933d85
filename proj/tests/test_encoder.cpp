#include <gtest/gtest.h>

#include <cmath>

#include "vimc/encoder.hpp"
#include "vimc/nn.hpp"

using namespace vimc;
using namespace vimc::encoder;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) { return nn::normal_matrix(r, c, s, rng); }

// Link strengths by direct evaluation: directed neighbour softmaxes, then
// geometric means.
Eigen::VectorXd links_oracle(const Matrix& f, const Matrix& wb) {
  const Eigen::Index n = f.rows();
  if (n <= 1) return Eigen::VectorXd(0);
  std::vector<double> r(static_cast<std::size_t>(n - 1));
  for (Eigen::Index k = 0; k + 1 < n; ++k) r[static_cast<std::size_t>(k)] = f.row(k) * wb * f.row(k + 1).transpose();
  auto right = [&](Eigen::Index i) {  // pr_{i,i+1}
    if (i == 0) return 1.0;
    const double a = std::exp(r[static_cast<std::size_t>(i)]);
    const double b = std::exp(r[static_cast<std::size_t>(i - 1)]);
    return a / (a + b);
  };
  auto left = [&](Eigen::Index i) {  // pr_{i,i-1}
    if (i == n - 1) return 1.0;
    const double a = std::exp(r[static_cast<std::size_t>(i - 1)]);
    const double b = std::exp(r[static_cast<std::size_t>(i)]);
    return a / (a + b);
  };
  Eigen::VectorXd out(n - 1);
  for (Eigen::Index k = 0; k + 1 < n; ++k) out(k) = std::sqrt(right(k) * left(k + 1));
  return out;
}

}  // namespace

TEST(Embed, Lookup) {
  Matrix table = Matrix::Identity(6, 6);
  EXPECT_EQ(embed({}, table).rows(), 0);
  EXPECT_EQ(embed({}, table).cols(), 6);
  const auto e = embed({4, 2, 4}, table);
  EXPECT_EQ(e.row(0), e.row(2));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(e.row(i).sum(), 1.0);
  EXPECT_EQ(e(1, 2), 1.0);
  EXPECT_THROW(embed({6}, table), std::out_of_range);
}

TEST(Links, SingleToken) {
  Rng rng(1);
  EXPECT_EQ(link_probabilities(random_matrix(1, 4, rng), Matrix::Zero(4, 4)).size(), 0);
}

TEST(Links, ZeroBilinearThreeTokens) {
  Rng rng(2);
  const auto p = link_probabilities(random_matrix(3, 4, rng), Matrix::Zero(4, 4));
  ASSERT_EQ(p.size(), 2);
  EXPECT_NEAR(p(0), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(p(1), 0.707107, 1e-6);
}

TEST(Links, ZeroBilinearInteriorPair) {
  Rng rng(3);
  const auto p = link_probabilities(random_matrix(4, 4, rng), Matrix::Zero(4, 4));
  EXPECT_NEAR(p(1), 0.5, 1e-15);
}

TEST(Links, MatchesDirectOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.bounded(10));
    const auto d = static_cast<Eigen::Index>(1 + rng.bounded(8));
    const Matrix f = random_matrix(n, d, rng);
    const Matrix wb = random_matrix(d, d, rng, 0.5);
    const auto got = link_probabilities(f, wb);
    const auto want = links_oracle(f, wb);
    ASSERT_EQ(got.size(), want.size());
    for (Eigen::Index k = 0; k < got.size(); ++k) EXPECT_NEAR(got(k), want(k), 1e-12);
  }
}

TEST(Phrasal, SingleToken) {
  const auto p = phrasal_matrix(Eigen::VectorXd(0));
  ASSERT_EQ(p.rows(), 1);
  EXPECT_EQ(p(0, 0), 1.0);
}

TEST(Phrasal, TwoHalfLinks) {
  Eigen::VectorXd links(2);
  links << 0.5, 0.5;
  const auto p = phrasal_matrix(links);
  EXPECT_NEAR(p(0, 2), 0.25, 1e-15);
  EXPECT_NEAR(p(2, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-15);
}

TEST(Phrasal, AllOnes) {
  const auto p = phrasal_matrix(Eigen::VectorXd::Ones(5));
  EXPECT_EQ(p, Matrix::Ones(6, 6));
}

TEST(Phrasal, PadRowsAreOne) {
  Eigen::VectorXd links(2);
  links << 0.3, 0.6;
  const auto p = phrasal_matrix(links, 5);
  ASSERT_EQ(p.rows(), 5);
  EXPECT_EQ(p.row(4), Eigen::RowVectorXd::Ones(5));
  EXPECT_EQ(p.col(3), Eigen::VectorXd::Ones(5));
  EXPECT_NEAR(p(0, 2), 0.18, 1e-15);
}

TEST(PhrasalAttention, AllOnesEqualsPlainAttention) {
  Rng rng(5);
  const Matrix f = random_matrix(5, 8, rng);
  AttentionWeights w{random_matrix(8, 8, rng, 0.3), random_matrix(8, 8, rng, 0.3), random_matrix(8, 8, rng, 0.3), 2};
  const ag::Mask mask{1, 1, 1, 1, 0};
  const auto mod = phrasal_attention(f, w, Matrix::Ones(5, 5), mask);
  Tape t;
  Var x = t.constant(f);
  Var plain = nn::multihead_attention(ag::matmul(x, t.constant(w.query)), ag::matmul(x, t.constant(w.key)),
                                      ag::matmul(x, t.constant(w.value)), 2, mask, false);
  EXPECT_TRUE((mod.output.array() == plain.value().array()).all());
  for (std::size_t h = 0; h < mod.attention.size(); ++h) {
    EXPECT_TRUE((mod.attention[h].array() == mod.modulated[h].array()).all());
  }
}

TEST(PhrasalAttention, SingleToken) {
  Rng rng(6);
  const Matrix f = random_matrix(1, 4, rng);
  AttentionWeights w{random_matrix(4, 4, rng), random_matrix(4, 4, rng), random_matrix(4, 4, rng), 1};
  const auto r = phrasal_attention(f, w, Matrix::Ones(1, 1), ag::full_mask(1));
  EXPECT_EQ(r.attention[0](0, 0), 1.0);
  EXPECT_TRUE(r.output.isApprox(f * w.value, 1e-14));
}

TEST(PhrasalAttention, RowStochasticAndBounded) {
  Rng rng(7);
  const Matrix f = random_matrix(3, 4, rng);
  AttentionWeights w{random_matrix(4, 4, rng), random_matrix(4, 4, rng), random_matrix(4, 4, rng), 1};
  const auto links = link_probabilities(f, random_matrix(4, 4, rng));
  const auto r = phrasal_attention(f, w, phrasal_matrix(links), ag::full_mask(3));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(r.attention[0].row(i).sum(), 1.0, 1e-9);
  EXPECT_TRUE((r.modulated[0].array() <= r.attention[0].array()).all());
}

TEST(PhrasalAttention, RejectsNonFinite) {
  Matrix f = Matrix::Zero(2, 2);
  f(0, 0) = std::nan("");
  AttentionWeights w{Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2), 1};
  EXPECT_THROW(phrasal_attention(f, w, Matrix::Ones(2, 2), ag::full_mask(2)), std::domain_error);
}

TEST(TextEncoder, IdentityStackWithoutBlocks) {
  ParameterSet ps;
  Rng rng(8);
  EncoderConfig cfg;
  cfg.vocab_size = 20;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 0;
  cfg.viwordformer = false;
  cfg.positional = false;
  TextEncoder enc(ps, cfg, rng);
  Tape t;
  const std::vector<int> ids{5, 6, 7};
  Var e = enc.embed(t, ids);
  Var out = enc.forward(t, e, ag::full_mask(3), TextRole::Question);
  EXPECT_EQ(out.value(), embed(ids, enc.table().value));
}

TEST(TextEncoder, DuplicateItemsIdentical) {
  ParameterSet ps;
  Rng rng(9);
  EncoderConfig cfg;
  cfg.vocab_size = 20;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.phrasal_every_layer = true;
  TextEncoder enc(ps, cfg, rng);
  Tape t;
  const std::vector<int> ids{5, 9, 11, 4};
  Var a = enc.encode(t, ids, ag::full_mask(4), TextRole::Context);
  Var b = enc.encode(t, ids, ag::full_mask(4), TextRole::Context);
  EXPECT_EQ(a.value(), b.value());
}

TEST(TextEncoder, TraceCarriesPhrasalMatrix) {
  ParameterSet ps;
  Rng rng(10);
  EncoderConfig cfg;
  cfg.vocab_size = 20;
  cfg.d_model = 8;
  cfg.heads = 2;
  TextEncoder enc(ps, cfg, rng);
  Tape t;
  EncoderTrace tr;
  enc.encode(t, {4, 5, 6, 0}, {1, 1, 1, 0}, TextRole::Option, &tr);
  ASSERT_EQ(tr.phrasal.rows(), 4);
  EXPECT_EQ(tr.links.size(), 2);
  EXPECT_EQ(tr.phrasal(3, 0), 1.0);
}
