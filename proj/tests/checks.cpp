#include "checks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "vimc/encoder.hpp"
#include "vimc/model.hpp"
#include "vimc/nn.hpp"

namespace vimc::checks {

namespace {

using ag::Mask;
using ag::Matrix;

void fail(SuiteResult& r, const std::string& what) {
  if (r.failures++ == 0) r.first_failure = what;
}

Mask random_mask(Eigen::Index n, Rng& rng) {
  // trailing PAD, at least one real token
  const auto real = static_cast<Eigen::Index>(1 + rng.bounded(static_cast<std::uint64_t>(n)));
  Mask m(static_cast<std::size_t>(n), 0);
  std::fill(m.begin(), m.begin() + real, 1);
  return m;
}

std::vector<int> random_ids(std::size_t n, int vocab, Rng& rng) {
  std::vector<int> ids(n);
  for (auto& id : ids) id = kNumReserved + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(vocab - kNumReserved)));
  return ids;
}

PreparedItem random_item(int vocab, Rng& rng) {
  PreparedItem it;
  it.id = "rand";
  it.question = random_ids(1 + rng.bounded(6), vocab, rng);
  for (auto& o : it.options) o = random_ids(1 + rng.bounded(5), vocab, rng);
  it.context = random_ids(2 + rng.bounded(12), vocab, rng);
  it.explanation = random_ids(1 + rng.bounded(4), vocab, rng);
  it.answer = static_cast<int>(rng.bounded(4));
  return it;
}

void randomize(ag::ParameterSet& ps, Rng& rng, double scale) {
  for (auto* p : ps.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += scale * rng.normal();
  }
}

// Rows sum to 1 over real columns and put exactly 0 on PAD columns.
void check_stochastic(SuiteResult& r, const Matrix& a, const Mask* cols, bool causal, const std::string& where) {
  ++r.cases;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const bool masked = (cols && !(*cols)[static_cast<std::size_t>(j)]) || (causal && j > i);
      if (masked) {
        if (a(i, j) != 0.0) fail(r, where + ": weight on a masked column");
        continue;
      }
      if (!(a(i, j) >= 0.0)) fail(r, where + ": negative weight");
      sum += a(i, j);
    }
    const double dev = std::abs(sum - 1.0);
    r.worst = std::max(r.worst, dev);
    if (dev > 1e-9) fail(r, where + ": row sum off by " + std::to_string(dev));
  }
}

}  // namespace

SuiteResult phrasal_suite(int draws, std::uint64_t seed) {
  SuiteResult r;
  Rng rng(seed);
  for (int draw = 0; draw < draws; ++draw) {
    ++r.cases;
    const auto n = static_cast<Eigen::Index>(1 + rng.bounded(16));
    const auto d = static_cast<Eigen::Index>(1 + rng.bounded(16));
    const double spread = 0.1 + 2.0 * rng.uniform();
    const Matrix f = nn::normal_matrix(n, d, 1.0, rng);
    const Matrix wb = nn::normal_matrix(d, d, spread / std::sqrt(static_cast<double>(d)), rng);
    const Eigen::VectorXd links = encoder::link_probabilities(f, wb);
    const Matrix p = encoder::phrasal_matrix(links);
    const std::string tag = "draw " + std::to_string(draw);
    if (p.rows() != n || p.cols() != n) {
      fail(r, tag + ": shape");
      continue;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p(i, i) != 1.0) fail(r, tag + ": diagonal");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (p(i, j) != p(j, i)) fail(r, tag + ": asymmetric");
        if (!(p(i, j) > 0.0 && p(i, j) <= 1.0)) fail(r, tag + ": outside (0, 1]");
        if (j >= i && j + 1 < n && p(i, j + 1) > p(i, j)) fail(r, tag + ": span decay");
        // direct product of the links spanned by [i, j]
        double prod = 1.0;
        for (Eigen::Index k = std::min(i, j); k < std::max(i, j); ++k) prod *= links(k);
        const double dev = std::abs(prod - p(i, j));
        r.worst = std::max(r.worst, dev);
        if (dev > 1e-9) fail(r, tag + ": log-space vs product " + std::to_string(dev));
      }
    }
  }
  return r;
}

SuiteResult attention_suite(int instances, std::uint64_t seed) {
  SuiteResult r;
  Rng rng(seed);
  constexpr int kVocab = 40;
  for (int inst = 0; inst < instances; ++inst) {
    const std::string tag = "instance " + std::to_string(inst);
    ModelConfig mc;
    mc.vocab_size = kVocab;
    mc.d_model = 8;
    mc.heads = 2;
    mc.encoder_layers = 1;
    mc.decoder_layers = 1;
    mc.seed = seed + static_cast<std::uint64_t>(inst);
    ViMultiChoice model(mc);
    randomize(model.parameters(), rng, 0.5);

    // phrasal blocks of every role, with PAD tails
    const auto& enc = model.text_encoder();
    for (auto role : {encoder::TextRole::Question, encoder::TextRole::Option, encoder::TextRole::Context}) {
      const auto n = static_cast<Eigen::Index>(1 + rng.bounded(10));
      Mask mask = random_mask(n, rng);
      std::vector<int> ids = random_ids(static_cast<std::size_t>(n), kVocab, rng);
      for (Eigen::Index i = 0; i < n; ++i)
        if (!mask[static_cast<std::size_t>(i)]) ids[static_cast<std::size_t>(i)] = kPad;
      ag::Tape t(false);
      encoder::EncoderTrace tr;
      enc.encode(t, ids, mask, role, &tr);
      for (std::size_t h = 0; h < tr.attention.size(); ++h) {
        check_stochastic(r, tr.attention[h], &mask, false, tag + " phrasal head");
        if (!(tr.modulated[h].array() <= tr.attention[h].array()).all()) fail(r, tag + ": A' > A");
      }

      // P = 1 gives plain attention bit for bit
      const auto& block = enc.phrasal_block(role);
      const Matrix f = nn::normal_matrix(n, mc.d_model, 1.0, rng);
      const encoder::AttentionWeights w{block.wq->value, block.wk->value, block.wv->value, block.heads};
      const auto ones = encoder::phrasal_attention(f, w, Matrix::Ones(n, n), mask);
      ag::Tape pt(false);
      ag::Var x = pt.constant(f);
      ag::Var plain = nn::multihead_attention(ag::matmul(x, pt.constant(w.query)), ag::matmul(x, pt.constant(w.key)),
                                              ag::matmul(x, pt.constant(w.value)), w.heads, mask, false);
      ++r.cases;
      if (!(ones.output.array() == plain.value().array()).all()) fail(r, tag + ": P = 1 not bit-exact");
    }

    // option comparison, co-attention and self-attention
    const PreparedItem item = random_item(kVocab, rng);
    {
      ag::Tape t(false);
      inference::AttentionTrace trace;
      const auto fwd = model.forward(t, item, &trace);
      for (const auto& [name, a] : trace) {
        if (name.rfind("gate/", 0) == 0) continue;  // per-token gates, not attention
        check_stochastic(r, a, nullptr, false, tag + " " + name);
      }
      (void)fwd;
    }

    // decoder-style attention: causal self-attention and padded cross-attention
    {
      ag::Tape t(false);
      const auto n = static_cast<Eigen::Index>(1 + rng.bounded(8));
      const auto m = static_cast<Eigen::Index>(1 + rng.bounded(8));
      ag::Var q = t.constant(nn::normal_matrix(n, mc.d_model, 1.0, rng));
      ag::Var kv = t.constant(nn::normal_matrix(m, mc.d_model, 1.0, rng));
      std::vector<ag::Var> self_att;
      std::vector<ag::Var> cross_att;
      nn::multihead_attention(q, q, q, mc.heads, ag::full_mask(n), true, nullptr, &self_att);
      const Mask km = random_mask(m, rng);
      nn::multihead_attention(q, kv, kv, mc.heads, km, false, nullptr, &cross_att);
      for (auto& a : self_att) check_stochastic(r, a.value(), nullptr, true, tag + " causal self-attention");
      for (auto& a : cross_att) check_stochastic(r, a.value(), &km, false, tag + " cross-attention");
    }
  }
  return r;
}

SuiteResult permutation_suite(int instances, std::uint64_t seed) {
  SuiteResult r;
  Rng rng(seed);
  constexpr int kVocab = 40;
  for (int inst = 0; inst < instances; ++inst) {
    ModelConfig mc;
    mc.vocab_size = kVocab;
    mc.d_model = 8;
    mc.heads = 2;
    mc.encoder_layers = 1;
    mc.decoder_layers = 1;
    mc.seed = seed * 1000 + static_cast<std::uint64_t>(inst);
    ViMultiChoice model(mc);
    randomize(model.parameters(), rng, 0.3);
    const PreparedItem base = random_item(kVocab, rng);

    ag::Tape t0(false);
    const auto ref = model.forward(t0, base);
    std::array<int, 4> perm{0, 1, 2, 3};
    do {
      ++r.cases;
      PreparedItem item = base;
      for (int i = 0; i < 4; ++i) item.options[static_cast<std::size_t>(i)] = base.options[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      ag::Tape t(false);
      const auto out = model.forward(t, item);
      for (int i = 0; i < 4; ++i) {
        const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
        const auto dst = static_cast<std::size_t>(i);
        const Matrix& a = out.final_features[dst].rows.value();
        const Matrix& b = ref.final_features[src].rows.value();
        const bool same = a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
        if (!same) {
          fail(r, "instance " + std::to_string(inst) + ": option features not bit-identical");
          if (a.rows() == b.rows() && a.cols() == b.cols()) r.worst = std::max(r.worst, (a - b).cwiseAbs().maxCoeff());
        }
        if (out.scores.value()(0, i) != ref.scores.value()(0, static_cast<Eigen::Index>(src))) {
          fail(r, "instance " + std::to_string(inst) + ": option score not bit-identical");
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return r;
}

}  // namespace vimc::checks
