#include "vimc/model.hpp"

#include <stdexcept>

namespace vimc {

using ag::Mask;
using ag::Var;

PreparedItem prepare(const TokenizedItem& item, const TruncationCaps& caps, int explanation_cap) {
  const TokenizedItem cut = truncate_item(item, caps);
  PreparedItem p;
  p.id = cut.id;
  p.subject = cut.subject;
  p.grade = cut.grade;
  p.answer = cut.answer;
  p.question = cut.question.ids;
  for (std::size_t k = 0; k < p.options.size(); ++k) p.options[k] = cut.options[k].ids;
  p.context = cut.context.ids;
  if (cut.explanation) p.explanation = truncate(*cut.explanation, explanation_cap).ids;
  return p;
}

ViMultiChoice::ViMultiChoice(const ModelConfig& config) : config_(config) {
  Rng rng(config.seed);
  encoder::EncoderConfig ec;
  ec.vocab_size = config.vocab_size;
  ec.d_model = config.d_model;
  ec.heads = config.heads;
  ec.layers = config.encoder_layers;
  ec.viwordformer = config.viwordformer;
  ec.phrasal_every_layer = config.phrasal_every_layer;
  encoder_ = std::make_unique<encoder::TextEncoder>(params_, ec, rng);
  inference_ = std::make_unique<inference::OptionInference>(params_, inference::InferenceConfig{config.d_model}, rng);
  // Zero scorer: every option starts equally likely.
  scorer_ = &params_.add("head.scorer", ag::Matrix::Zero(config.d_model, 1));
  heads::DecoderConfig dc;
  dc.d_model = config.d_model;
  dc.heads = config.heads;
  dc.layers = config.decoder_layers;
  decoder_ = std::make_unique<heads::ExplanationDecoder>(params_, dc, encoder_->table(), rng);
}

ItemForward ViMultiChoice::forward(ag::Tape& t, const PreparedItem& item, inference::AttentionTrace* trace,
                                   encoder::EncoderTrace* question_trace) const {
  if (item.context.empty()) throw std::invalid_argument("item '" + item.id + "': retrieval produced no context");
  auto encode = [&](const std::vector<int>& ids, encoder::TextRole role, encoder::EncoderTrace* tr) {
    Mask mask = ag::full_mask(static_cast<Eigen::Index>(ids.size()));
    return inference::Sequence{encoder_->encode(t, ids, mask, role, tr), mask};
  };
  ItemForward f;
  f.question = encode(item.question, encoder::TextRole::Question, question_trace);
  f.context = encode(item.context, encoder::TextRole::Context, nullptr);
  std::array<inference::Sequence, kNumOptions> options;
  for (std::size_t k = 0; k < options.size(); ++k) {
    if (item.options[k].empty()) throw std::invalid_argument("item '" + item.id + "': empty option after tokenization");
    options[k] = encode(item.options[k], encoder::TextRole::Option, nullptr);
  }
  f.options = inference_->forward(t, f.question, options, f.context, trace);
  for (std::size_t k = 0; k < options.size(); ++k) f.final_features[k] = {f.options.final_features[k], f.options.fused[k].mask};
  f.scores = heads::option_scores(f.final_features, t.param(*scorer_));
  return f;
}

ItemLoss ViMultiChoice::loss(ag::Tape& t, const PreparedItem& item, heads::LossMode mode) const {
  ItemForward f = forward(t, item);
  ItemLoss out;
  out.multiple_choice = ag::cross_entropy_rows(f.scores, {item.answer});
  for (int k = 0; k < kNumOptions; ++k) out.scores[static_cast<std::size_t>(k)] = f.scores.value()(0, k);
  if (mode == heads::LossMode::Multitask && item.explanation) {
    const auto memory = heads::decoder_memory(f.question, f.context,
                                              f.final_features[static_cast<std::size_t>(item.answer)]);
    std::vector<int> targets = *item.explanation;
    targets.push_back(kEos);
    out.explanation = decoder_->teacher_forced_nll(t, memory, targets);
  }
  return out;
}

Prediction ViMultiChoice::predict(const PreparedItem& item, bool generate, const heads::DecodeOptions& decode) const {
  ag::Tape t(false);
  ItemForward f = forward(t, item);
  Prediction p;
  p.id = item.id;
  heads::Scores s{};
  for (int k = 0; k < kNumOptions; ++k) s[static_cast<std::size_t>(k)] = f.scores.value()(0, k);
  p.probabilities = heads::option_probabilities(s);
  p.answer = heads::select_option(p.probabilities);
  if (generate) {
    const int k = heads::memory_option(heads::MemoryMode::Predicted, item.answer, p.answer);
    const auto memory = heads::decoder_memory(f.question, f.context, f.final_features[static_cast<std::size_t>(k)]);
    p.explanation = decoder_->decode(memory.rows.value(), memory.mask, decode);
  }
  return p;
}

}  // namespace vimc
