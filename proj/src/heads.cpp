#include "vimc/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace vimc::heads {

Var option_scores(const std::array<Sequence, kOptions>& final_features, Var ws) {
  std::vector<Var> scores;
  for (int k = 0; k < kOptions; ++k) {
    const auto& f = final_features[static_cast<std::size_t>(k)];
    if (std::none_of(f.mask.begin(), f.mask.end(), [](std::uint8_t m) { return m != 0; })) {
      throw std::invalid_argument("option_scores: option " + std::to_string(k) + " has no real tokens");
    }
    scores.push_back(ag::matmul(ag::max_rows(f.rows, f.mask), ws));
  }
  return ag::concat_cols(scores);
}

Scores option_probabilities(const Scores& scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  Scores e{};
  for (int k = 0; k < kOptions; ++k) e[static_cast<std::size_t>(k)] = std::exp(scores[static_cast<std::size_t>(k)] - mx);
  Scores sorted = e;
  std::sort(sorted.begin(), sorted.end());
  double z = 0.0;
  for (double v : sorted) z += v;
  Scores p{};
  for (int k = 0; k < kOptions; ++k) p[static_cast<std::size_t>(k)] = e[static_cast<std::size_t>(k)] / z;
  return p;
}

int select_option(const Scores& probs) {
  int best = 0;
  for (int k = 1; k < kOptions; ++k) {
    if (probs[static_cast<std::size_t>(k)] > probs[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

Sequence decoder_memory(const Sequence& question, const Sequence& context, const Sequence& option) {
  if (context.rows.rows() == 0) throw std::invalid_argument("decoder_memory: missing context");
  std::vector<Var> parts;
  Mask mask;
  for (const Sequence* s : {&question, &context, &option}) {
    if (s->rows.rows() == 0) continue;
    parts.push_back(s->rows);
    mask.insert(mask.end(), s->mask.begin(), s->mask.end());
  }
  return {ag::concat_rows(parts), std::move(mask)};
}

// --------------------------------------------------------------- decoder

ExplanationDecoder::ExplanationDecoder(ParameterSet& ps, const DecoderConfig& config, Parameter& embedding, Rng& rng,
                                       const std::string& prefix)
    : config_(config), embedding_(&embedding) {
  const int d = config.d_model;
  if (embedding.value.cols() != d) throw std::invalid_argument("decoder: embedding width differs from d_model");
  if (config.layers < 1) throw std::invalid_argument("decoder: at least one layer required");
  const int hidden = config.ff_hidden > 0 ? config.ff_hidden : 2 * d;
  vocab_bias_ = &ps.add(prefix + ".vocab_bias", Matrix::Zero(1, embedding.value.rows()));
  for (int l = 0; l < config.layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    DecoderLayer layer;
    layer.norm_self = nn::LayerNorm::create(ps, name + ".norm_self", d);
    layer.self_attention = nn::AttentionBlock::create(ps, name + ".self", d, config.heads, rng);
    layer.norm_cross = nn::LayerNorm::create(ps, name + ".norm_cross", d);
    layer.cross_attention = nn::AttentionBlock::create(ps, name + ".cross", d, config.heads, rng);
    layer.norm_ff = nn::LayerNorm::create(ps, name + ".norm_ff", d);
    layer.ff = nn::FeedForward::create(ps, name + ".ff", d, hidden, rng);
    layers_.push_back(layer);
  }
  final_norm_ = nn::LayerNorm::create(ps, prefix + ".final_norm", d);
}

Var ExplanationDecoder::logits(Tape& t, const Sequence& memory, const std::vector<int>& inputs) const {
  if (inputs.empty()) throw std::invalid_argument("decoder: empty input");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Var x = ag::add(ag::gather_rows(t.param(*embedding_), inputs),
                  t.constant(nn::sinusoidal_positions(n, config_.d_model)));
  const Mask self_mask = ag::full_mask(n);
  for (const auto& layer : layers_) {
    Var h = layer.norm_self(t, x);
    x = ag::add(x, layer.self_attention(t, h, h, self_mask, true));
    x = ag::add(x, layer.cross_attention(t, layer.norm_cross(t, x), memory.rows, memory.mask, false));
    x = ag::add(x, layer.ff(t, layer.norm_ff(t, x)));
  }
  Var h = final_norm_(t, x);
  const double s = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
  return ag::add_row(ag::scale(ag::matmul_nt(h, t.param(*embedding_)), s), t.param(*vocab_bias_));
}

Var ExplanationDecoder::teacher_forced_nll(Tape& t, const Sequence& memory, const std::vector<int>& targets) const {
  if (targets.empty()) throw std::invalid_argument("decoder: empty target sequence");
  std::vector<int> inputs;
  inputs.reserve(targets.size());
  inputs.push_back(kBos);
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  return ag::cross_entropy_rows(logits(t, memory, inputs), targets);
}

Eigen::RowVectorXd ExplanationDecoder::next_log_probs(const Matrix& memory, const Mask& mask,
                                                      const std::vector<int>& prefix) const {
  Tape t(false);
  Var z = logits(t, {t.constant(memory), mask}, prefix);
  Eigen::RowVectorXd last = z.value().row(z.rows() - 1);
  const double mx = last.maxCoeff();
  const double lse = mx + std::log((last.array() - mx).exp().sum());
  return (last.array() - lse).matrix();
}

std::vector<int> ExplanationDecoder::decode(const Matrix& memory, const Mask& mask, const DecodeOptions& options) const {
  if (options.max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
  if (options.strategy == Strategy::Greedy) {
    std::vector<int> prefix{kBos};
    for (int step = 0; step < options.max_len; ++step) {
      Eigen::RowVectorXd lp = next_log_probs(memory, mask, prefix);
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < lp.size(); ++v) {
        if (lp(v) > lp(best)) best = v;
      }
      if (best == kEos) break;
      prefix.push_back(static_cast<int>(best));
    }
    return {prefix.begin() + 1, prefix.end()};
  }

  if (options.beam_size < 1) throw std::invalid_argument("decode: beam size must be >= 1");
  struct Hyp {
    std::vector<int> tokens;
    double score;
  };
  std::vector<Hyp> beams{{{kBos}, 0.0}};
  std::optional<Hyp> best_finished;
  for (int step = 0; step < options.max_len && !beams.empty(); ++step) {
    struct Cand {
      std::size_t beam;
      int token;
      double score;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      Eigen::RowVectorXd lp = next_log_probs(memory, mask, beams[b].tokens);
      for (Eigen::Index v = 0; v < lp.size(); ++v) cands.push_back({b, static_cast<int>(v), beams[b].score + lp(v)});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) {
      if (a.score != c.score) return a.score > c.score;
      if (a.beam != c.beam) return a.beam < c.beam;
      return a.token < c.token;
    });
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) == options.beam_size) break;
      if (best_finished && c.score <= best_finished->score) break;
      Hyp h = beams[c.beam];
      h.score = c.score;
      if (c.token == kEos) {
        if (!best_finished || h.score > best_finished->score) best_finished = h;
        continue;
      }
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
    }
    beams = std::move(next);
  }
  const Hyp* pick = best_finished ? &*best_finished : nullptr;
  for (const auto& b : beams) {
    if (!pick || b.score > pick->score) pick = &b;
  }
  if (!pick) return {};
  return {pick->tokens.begin() + 1, pick->tokens.end()};
}

// ------------------------------------------------------------------ loss

LossBreakdown multitask_loss(const std::vector<Scores>& option_probs, const std::vector<int>& gold,
                             const std::vector<std::optional<std::vector<double>>>& explanation_token_log_probs,
                             LossMode mode) {
  if (option_probs.size() != gold.size()) throw std::invalid_argument("multitask_loss: batch size mismatch");
  if (option_probs.empty()) throw std::invalid_argument("multitask_loss: empty batch");
  LossBreakdown out;
  double mc = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= kOptions) throw std::out_of_range("multitask_loss: gold answer out of range");
    mc -= std::log(option_probs[i][static_cast<std::size_t>(gold[i])]);
  }
  out.multiple_choice = mc / static_cast<double>(gold.size());
  if (mode == LossMode::Multitask) {
    double e = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const auto* lp = i < explanation_token_log_probs.size() && explanation_token_log_probs[i]
                           ? &*explanation_token_log_probs[i]
                           : nullptr;
      if (!lp) {
        ++out.missing_explanations;
        continue;
      }
      ++out.explanation_items;
      for (double v : *lp) e -= v;
    }
    if (out.explanation_items) out.explanation = e / static_cast<double>(out.explanation_items);
  }
  out.total = out.multiple_choice + out.explanation;
  return out;
}

}  // namespace vimc::heads
