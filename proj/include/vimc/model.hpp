#pragma once

// The full reading-comprehension model: shared text encoder, option
// comparison network, option scorer and explanation decoder.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/data.hpp"
#include "vimc/encoder.hpp"
#include "vimc/heads.hpp"
#include "vimc/inference.hpp"

namespace vimc {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 2;
  bool viwordformer = true;
  bool phrasal_every_layer = false;
  std::uint64_t seed = 13;
};

/// An item ready for the model: token ids already truncated.
struct PreparedItem {
  std::string id;
  Subject subject = Subject::Literature;
  int grade = 10;
  std::vector<int> question;
  std::array<std::vector<int>, kNumOptions> options;
  std::vector<int> context;
  std::optional<std::vector<int>> explanation;  // without EOS
  int answer = 0;
};

PreparedItem prepare(const TokenizedItem& item, const TruncationCaps& caps, int explanation_cap = 300);

struct ItemForward {
  inference::Sequence question;
  inference::Sequence context;
  inference::OptionOutputs options;
  std::array<inference::Sequence, kNumOptions> final_features;
  ag::Var scores;  // 1 x 4
};

struct ItemLoss {
  ag::Var multiple_choice;                 // -ln p(gold)
  std::optional<ag::Var> explanation;      // sum of token NLLs, EOS included
  heads::Scores scores{};
};

struct Prediction {
  std::string id;
  heads::Scores probabilities{};
  int answer = 0;
  std::vector<int> explanation;
};

class ViMultiChoice {
 public:
  explicit ViMultiChoice(const ModelConfig& config);
  ViMultiChoice(const ViMultiChoice&) = delete;
  ViMultiChoice& operator=(const ViMultiChoice&) = delete;

  ItemForward forward(ag::Tape& t, const PreparedItem& item, inference::AttentionTrace* trace = nullptr,
                      encoder::EncoderTrace* question_trace = nullptr) const;

  /// Teacher-forced losses; the decoder is conditioned on the gold option.
  ItemLoss loss(ag::Tape& t, const PreparedItem& item, heads::LossMode mode) const;

  Prediction predict(const PreparedItem& item, bool generate, const heads::DecodeOptions& decode = {}) const;

  ag::ParameterSet& parameters() { return params_; }
  const ag::ParameterSet& parameters() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const encoder::TextEncoder& text_encoder() const { return *encoder_; }

 private:
  ModelConfig config_;
  ag::ParameterSet params_;
  std::unique_ptr<encoder::TextEncoder> encoder_;
  std::unique_ptr<inference::OptionInference> inference_;
  ag::Parameter* scorer_;
  std::unique_ptr<heads::ExplanationDecoder> decoder_;
};

}  // namespace vimc
