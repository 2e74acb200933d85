#include "vimc/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace vimc::encoder {

namespace {

Eigen::Index count_valid(const Mask& mask) {
  Eigen::Index valid = 0;
  while (valid < static_cast<Eigen::Index>(mask.size()) && mask[static_cast<std::size_t>(valid)]) ++valid;
  for (auto i = static_cast<std::size_t>(valid); i < mask.size(); ++i) {
    if (mask[i]) throw std::invalid_argument("mask: PAD positions must be trailing");
  }
  return valid;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::domain_error(std::string(what) + ": non-finite input");
}

}  // namespace

Var neighbor_relation_scores(Var features, Var bilinear, Eigen::Index valid) {
  if (valid < 2) return features.tape->constant(Matrix::Zero(0, 1));
  Var left = ag::slice_rows(features, 0, valid - 1);
  Var right = ag::slice_rows(features, 1, valid - 1);
  return ag::row_sum(ag::cmul(ag::matmul(left, bilinear), right));
}

Var log_link_probabilities(Var features, Var bilinear, Eigen::Index valid) {
  return ag::log_link_strengths(neighbor_relation_scores(features, bilinear, valid));
}

Eigen::VectorXd link_probabilities(const Matrix& features, const Matrix& bilinear) {
  if (features.rows() <= 1) return Eigen::VectorXd(0);
  require_finite(features, "link_probabilities");
  Tape t;
  Var logp = log_link_probabilities(t.constant(features), t.constant(bilinear), features.rows());
  return logp.value().col(0).array().exp().matrix();
}

Matrix phrasal_matrix(const Eigen::VectorXd& links, Eigen::Index n) {
  for (Eigen::Index k = 0; k < links.size(); ++k) {
    if (!(links(k) > 0.0) || links(k) > 1.0) throw std::domain_error("phrasal_matrix: link strength outside (0, 1]");
  }
  if (n < 0) n = links.size() + 1;
  Tape t;
  Matrix logs = links.array().log().matrix();
  return ag::phrasal_from_log_links(t.constant(logs), n).value();
}

PhrasalAttentionResult phrasal_attention(const Matrix& features, const AttentionWeights& weights,
                                         const Matrix& phrasal, const Mask& mask) {
  require_finite(features, "phrasal_attention");
  require_finite(phrasal, "phrasal_attention");
  if (phrasal.rows() != features.rows() || phrasal.cols() != features.rows()) {
    throw std::invalid_argument("phrasal_attention: phrasal matrix must be n x n");
  }
  if (static_cast<Eigen::Index>(mask.size()) != features.rows()) {
    throw std::invalid_argument("phrasal_attention: mask length mismatch");
  }
  Tape t;
  Var f = t.constant(features);
  Var p = t.constant(phrasal);
  std::vector<Var> att;
  std::vector<Var> mod;
  Var out = nn::multihead_attention(ag::matmul(f, t.constant(weights.query)), ag::matmul(f, t.constant(weights.key)),
                                    ag::matmul(f, t.constant(weights.value)), weights.heads, mask, false, &p, &att,
                                    &mod);
  PhrasalAttentionResult r;
  for (Var v : att) r.attention.push_back(v.value());
  for (Var v : mod) r.modulated.push_back(v.value());
  r.output = out.value();
  return r;
}

// ----------------------------------------------------------------- model

PhrasalBlock PhrasalBlock::create(ParameterSet& ps, const std::string& name, int d, int heads, Rng& rng) {
  PhrasalBlock b;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  b.wq = &ps.add(name + ".q", nn::normal_matrix(d, d, s, rng));
  b.wk = &ps.add(name + ".k", nn::normal_matrix(d, d, s, rng));
  b.wv = &ps.add(name + ".v", nn::normal_matrix(d, d, s, rng));
  b.bilinear = &ps.add(name + ".bilinear", Matrix::Zero(d, d));
  b.norm = nn::LayerNorm::create(ps, name + ".norm", d);
  b.heads = heads;
  return b;
}

Var PhrasalBlock::operator()(Tape& t, Var features, const Mask& mask, EncoderTrace* trace) const {
  require_finite(features.value(), "phrasal block");
  const Eigen::Index n = features.rows();
  const Eigen::Index valid = count_valid(mask);
  Var logp = log_link_probabilities(features, t.param(*bilinear), valid);
  Var p = ag::phrasal_from_log_links(logp, n);
  std::vector<Var> att;
  std::vector<Var> mod;
  Var mixed = nn::multihead_attention(ag::matmul(features, t.param(*wq)), ag::matmul(features, t.param(*wk)),
                                      ag::matmul(features, t.param(*wv)), heads, mask, false, &p,
                                      trace ? &att : nullptr, trace ? &mod : nullptr);
  if (trace) {
    trace->links = logp.value().col(0).array().exp().matrix();
    trace->phrasal = p.value();
    for (Var v : att) trace->attention.push_back(v.value());
    for (Var v : mod) trace->modulated.push_back(v.value());
  }
  return norm(t, ag::add(features, mixed));
}

Var EncoderLayer::operator()(Tape& t, Var x, const Mask& mask) const {
  Var h = norm1(t, x);
  Var mixed;
  if (bilinear) {
    const Eigen::Index valid = count_valid(mask);
    Var p = ag::phrasal_from_log_links(log_link_probabilities(h, t.param(*bilinear), valid), h.rows());
    mixed = nn::multihead_attention(ag::matmul(h, t.param(*attention.wq)), ag::matmul(h, t.param(*attention.wk)),
                                    ag::matmul(h, t.param(*attention.wv)), attention.heads, mask, false, &p);
    mixed = ag::matmul(mixed, t.param(*attention.wo));
  } else {
    mixed = attention(t, h, h, mask, false);
  }
  x = ag::add(x, mixed);
  return ag::add(x, ff(t, norm2(t, x)));
}

TextEncoder::TextEncoder(ParameterSet& ps, const EncoderConfig& config, Rng& rng, const std::string& prefix)
    : config_(config) {
  const int d = config.d_model;
  if (config.vocab_size <= 0) throw std::invalid_argument("encoder: vocabulary size must be positive");
  if (d <= 0 || config.heads <= 0 || d % config.heads != 0) {
    throw std::invalid_argument("encoder: d_model must be divisible by heads");
  }
  if (config.layers < 0) throw std::invalid_argument("encoder: negative layer count");
  const int hidden = config.ff_hidden > 0 ? config.ff_hidden : 2 * d;
  table_ = &ps.add(prefix + ".embedding", nn::normal_matrix(config.vocab_size, d, config.embedding_stddev, rng));
  if (config.viwordformer) {
    const char* names[3] = {"question", "option", "context"};
    for (int r = 0; r < 3; ++r) {
      blocks_[static_cast<std::size_t>(r)] =
          PhrasalBlock::create(ps, prefix + ".vwf." + names[r], d, config.heads, rng);
    }
  }
  for (int l = 0; l < config.layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    EncoderLayer layer;
    layer.norm1 = nn::LayerNorm::create(ps, name + ".norm1", d);
    layer.attention = nn::AttentionBlock::create(ps, name + ".attn", d, config.heads, rng);
    layer.norm2 = nn::LayerNorm::create(ps, name + ".norm2", d);
    layer.ff = nn::FeedForward::create(ps, name + ".ff", d, hidden, rng);
    if (config.phrasal_every_layer) layer.bilinear = &ps.add(name + ".bilinear", Matrix::Zero(d, d));
    layers_.push_back(layer);
  }
  if (config.layers > 0) final_norm_ = nn::LayerNorm::create(ps, prefix + ".final_norm", d);
}

Var TextEncoder::embed(Tape& t, const std::vector<int>& ids) const {
  Var rows = ag::gather_rows(t.param(*table_), ids);
  if (!config_.positional || ids.empty()) return rows;
  return ag::add(rows, t.constant(nn::sinusoidal_positions(static_cast<Eigen::Index>(ids.size()), config_.d_model)));
}

Var TextEncoder::forward(Tape& t, Var embedded, const Mask& mask, TextRole role, EncoderTrace* trace) const {
  if (static_cast<Eigen::Index>(mask.size()) != embedded.rows()) throw std::invalid_argument("encoder: mask length mismatch");
  Var x = embedded;
  if (config_.viwordformer) x = blocks_[static_cast<std::size_t>(role)](t, x, mask, trace);
  for (const auto& layer : layers_) x = layer(t, x, mask);
  if (!layers_.empty()) x = final_norm_(t, x);
  return x;
}

Var TextEncoder::encode(Tape& t, const std::vector<int>& ids, const Mask& mask, TextRole role,
                        EncoderTrace* trace) const {
  return forward(t, embed(t, ids), mask, role, trace);
}

Matrix embed(const std::vector<int>& ids, const Matrix& table) {
  Tape t;
  return ag::gather_rows(t.constant(table), ids).value();
}

}  // namespace vimc::encoder
