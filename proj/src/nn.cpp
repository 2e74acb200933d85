#include "vimc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vimc::nn {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  }
  return m;
}

Linear Linear::create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = &ps.add(name + ".w", normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (with_bias) l.bias = &ps.add(name + ".b", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& t, Var x) const {
  Var y = ag::matmul(x, t.param(*weight));
  return bias ? ag::add_row(y, t.param(*bias)) : y;
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, int width) {
  LayerNorm ln;
  ln.gain = &ps.add(name + ".gain", Matrix::Ones(1, width));
  ln.bias = &ps.add(name + ".bias", Matrix::Zero(1, width));
  return ln;
}

Var LayerNorm::operator()(Tape& t, Var x) const { return ag::layer_norm_rows(x, t.param(*gain), t.param(*bias)); }

Var multihead_attention(Var queries, Var keys, Var values, int heads, const Mask& key_mask, bool causal,
                        const Var* modulation, std::vector<Var>* attention, std::vector<Var>* modulated) {
  const Eigen::Index d = queries.cols();
  if (heads < 1 || d % heads != 0) throw std::invalid_argument("attention: width not divisible by head count");
  if (keys.cols() != d || values.cols() != d) throw std::invalid_argument("attention: projection width mismatch");
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? queries : ag::slice_cols(queries, h * dh, dh);
    Var kh = heads == 1 ? keys : ag::slice_cols(keys, h * dh, dh);
    Var vh = heads == 1 ? values : ag::slice_cols(values, h * dh, dh);
    Var a = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), &key_mask, causal);
    if (attention) attention->push_back(a);
    if (modulation) {
      a = ag::cmul(a, *modulation);
      if (modulated) modulated->push_back(a);
    }
    outs.push_back(ag::matmul(a, vh));
  }
  return heads == 1 ? outs.front() : ag::concat_cols(outs);
}

AttentionBlock AttentionBlock::create(ParameterSet& ps, const std::string& name, int d, int heads, Rng& rng) {
  AttentionBlock b;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  b.wq = &ps.add(name + ".q", normal_matrix(d, d, s, rng));
  b.wk = &ps.add(name + ".k", normal_matrix(d, d, s, rng));
  b.wv = &ps.add(name + ".v", normal_matrix(d, d, s, rng));
  b.wo = &ps.add(name + ".o", normal_matrix(d, d, s, rng));
  b.heads = heads;
  return b;
}

Var AttentionBlock::operator()(Tape& t, Var query_in, Var kv_in, const Mask& kv_mask, bool causal,
                               std::vector<Var>* attention) const {
  Var q = ag::matmul(query_in, t.param(*wq));
  Var k = ag::matmul(kv_in, t.param(*wk));
  Var v = ag::matmul(kv_in, t.param(*wv));
  Var mixed = multihead_attention(q, k, v, heads, kv_mask, causal, nullptr, attention);
  return ag::matmul(mixed, t.param(*wo));
}

FeedForward FeedForward::create(ParameterSet& ps, const std::string& name, int d, int hidden, Rng& rng) {
  return {Linear::create(ps, name + ".in", d, hidden, rng), Linear::create(ps, name + ".out", hidden, d, rng)};
}

Var FeedForward::operator()(Tape& t, Var x) const { return out(t, ag::relu(in(t, x))); }

Matrix sinusoidal_positions(Eigen::Index n, Eigen::Index d) {
  Matrix pe(n, d);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace vimc::nn
