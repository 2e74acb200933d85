#pragma once

// Answer selection and explanation generation heads.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/data.hpp"
#include "vimc/inference.hpp"
#include "vimc/nn.hpp"
#include "vimc/random.hpp"

namespace vimc::heads {

using ag::Mask;
using ag::Matrix;
using ag::Parameter;
using ag::ParameterSet;
using ag::Tape;
using ag::Var;
using inference::kOptions;
using inference::Sequence;

using Scores = std::array<double, kOptions>;

/// s_k = W_s^T maxpool(f_k) over non-PAD positions; returns 1 x 4.
Var option_scores(const std::array<Sequence, kOptions>& final_features, Var ws);

/// Softmax over the four scores. The normalizer is summed in ascending
/// order so permuting the scores permutes the probabilities exactly.
Scores option_probabilities(const Scores& scores);

/// Argmax; ties go to the lowest index.
int select_option(const Scores& probs);

enum class MemoryMode { Gold, Predicted };

/// Index of the option whose features condition the decoder.
inline int memory_option(MemoryMode mode, int gold, int predicted) {
  return mode == MemoryMode::Gold ? gold : predicted;
}

/// [f_Q ; f_P ; f_k] along the sequence axis with the combined mask.
Sequence decoder_memory(const Sequence& question, const Sequence& context, const Sequence& option);

struct DecoderConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 2;
  int ff_hidden = 0;  // 0 means 2 * d_model
};

struct DecoderLayer {
  nn::LayerNorm norm_self;
  nn::AttentionBlock self_attention;
  nn::LayerNorm norm_cross;
  nn::AttentionBlock cross_attention;
  nn::LayerNorm norm_ff;
  nn::FeedForward ff;
};

enum class Strategy { Greedy, Beam };

struct DecodeOptions {
  int max_len = 300;
  Strategy strategy = Strategy::Greedy;
  int beam_size = 4;
};

/// Transformer decoder over a DecoderMemory. Token embeddings are the
/// encoder's table; the output projection is that table transposed plus a
/// learned vocabulary bias.
class ExplanationDecoder {
 public:
  ExplanationDecoder(ParameterSet& ps, const DecoderConfig& config, Parameter& embedding, Rng& rng,
                     const std::string& prefix = "decoder");

  /// Next-token logits for every position of `inputs` (which start with BOS).
  Var logits(Tape& t, const Sequence& memory, const std::vector<int>& inputs) const;

  /// Sum over target positions of -log p(target_t | target_<t, memory);
  /// inputs are BOS followed by the targets without their last token.
  Var teacher_forced_nll(Tape& t, const Sequence& memory, const std::vector<int>& targets) const;

  /// Generates from BOS until EOS or max_len tokens; BOS/EOS are not
  /// included in the result. Deterministic: ties pick the lowest token id.
  std::vector<int> decode(const Matrix& memory, const Mask& mask, const DecodeOptions& options) const;

  int vocab_size() const { return static_cast<int>(embedding_->value.rows()); }

 private:
  Eigen::RowVectorXd next_log_probs(const Matrix& memory, const Mask& mask, const std::vector<int>& prefix) const;

  DecoderConfig config_;
  Parameter* embedding_;
  Parameter* vocab_bias_;
  std::vector<DecoderLayer> layers_;
  nn::LayerNorm final_norm_;
};

struct LossBreakdown {
  double multiple_choice = 0.0;
  double explanation = 0.0;
  double total = 0.0;
  std::size_t explanation_items = 0;
  std::size_t missing_explanations = 0;
};

enum class LossMode { Single, Multitask };

/// Value-level multitask objective for a batch of N items:
/// L_MC = -(1/N) sum ln p_i(gold_i); L_E = -(1/N_E) sum_i sum_t log p(w*_it)
/// over items carrying explanation log-probabilities (N_E of them);
/// L = L_MC + L_E, with L_E = 0 in single mode.
LossBreakdown multitask_loss(const std::vector<Scores>& option_probs, const std::vector<int>& gold,
                             const std::vector<std::optional<std::vector<double>>>& explanation_token_log_probs,
                             LossMode mode);

}  // namespace vimc::heads
