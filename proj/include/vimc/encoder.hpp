#pragma once

// ViWordFormer text encoder: token embeddings, a phrasal-attention block
// whose self-attention weights are scaled by same-phrase probabilities of
// token spans, and a stack of pre-norm transformer encoder layers.

#include <array>
#include <string>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/nn.hpp"
#include "vimc/random.hpp"

namespace vimc::encoder {

using ag::Mask;
using ag::Matrix;
using ag::Parameter;
using ag::ParameterSet;
using ag::Tape;
using ag::Var;

// ------------------------------------------------------ phrasal structure

/// r_k = f_k^T W_b f_{k+1} for consecutive real tokens, as a (valid-1) x 1 column.
Var neighbor_relation_scores(Var features, Var bilinear, Eigen::Index valid);

/// ln P_k for the first `valid` rows of `features` (trailing rows are PAD).
Var log_link_probabilities(Var features, Var bilinear, Eigen::Index valid);

/// Link strengths P_1..P_{n-1}: geometric mean of the two directed
/// neighbour probabilities. Tokens with a single neighbour give it
/// probability 1. Empty for n <= 1.
Eigen::VectorXd link_probabilities(const Matrix& features, const Matrix& bilinear);

/// Same-phrase span probabilities from link strengths (all in (0, 1]).
/// `n` >= links + 1 pads with PAD rows/columns set to 1; -1 means links + 1.
Matrix phrasal_matrix(const Eigen::VectorXd& links, Eigen::Index n = -1);

struct AttentionWeights {
  Matrix query;  // d x d
  Matrix key;
  Matrix value;
  int heads = 1;
};

struct PhrasalAttentionResult {
  std::vector<Matrix> attention;  // per head, before modulation
  std::vector<Matrix> modulated;  // per head, A ⊙ P
  Matrix output;                  // A' (f W_v), heads concatenated
};

/// A = softmax((f W_q)(f W_k)^T / sqrt(d_head)) with PAD columns masked,
/// A' = A ⊙ P without renormalization, output = A' (f W_v).
PhrasalAttentionResult phrasal_attention(const Matrix& features, const AttentionWeights& weights,
                                         const Matrix& phrasal, const Mask& mask);

// ----------------------------------------------------------------- model

enum class TextRole { Question = 0, Option = 1, Context = 2 };

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int heads = 4;
  int layers = 2;
  int ff_hidden = 0;  // 0 means 2 * d_model
  bool viwordformer = true;
  /// Also modulate every encoder layer's self-attention with its own
  /// phrasal matrix, in addition to the block on the embeddings.
  bool phrasal_every_layer = false;
  bool positional = true;
  double embedding_stddev = 1.0;
};

struct EncoderTrace {
  Eigen::VectorXd links;
  Matrix phrasal;
  std::vector<Matrix> attention;
  std::vector<Matrix> modulated;
};

/// Parameters of one ViWordFormer block.
struct PhrasalBlock {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* bilinear = nullptr;
  nn::LayerNorm norm;
  int heads = 1;

  static PhrasalBlock create(ParameterSet& ps, const std::string& name, int d, int heads, Rng& rng);
  /// LayerNorm(f + (A ⊙ P)(f W_v)).
  Var operator()(Tape& t, Var features, const Mask& mask, EncoderTrace* trace = nullptr) const;
};

struct EncoderLayer {
  nn::LayerNorm norm1;
  nn::AttentionBlock attention;
  nn::LayerNorm norm2;
  nn::FeedForward ff;
  Parameter* bilinear = nullptr;  // only with phrasal_every_layer

  Var operator()(Tape& t, Var x, const Mask& mask) const;
};

class TextEncoder {
 public:
  TextEncoder(ParameterSet& ps, const EncoderConfig& config, Rng& rng, const std::string& prefix = "encoder");

  /// Embedding-table rows for `ids`, plus sinusoidal positions when enabled.
  Var embed(Tape& t, const std::vector<int>& ids) const;
  /// ViWordFormer block for `role` (if enabled), then the layer stack and a
  /// final LayerNorm (omitted when there are no layers).
  Var forward(Tape& t, Var embedded, const Mask& mask, TextRole role, EncoderTrace* trace = nullptr) const;
  Var encode(Tape& t, const std::vector<int>& ids, const Mask& mask, TextRole role,
             EncoderTrace* trace = nullptr) const;

  Parameter& table() const { return *table_; }
  const PhrasalBlock& phrasal_block(TextRole role) const { return blocks_[static_cast<std::size_t>(role)]; }
  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Parameter* table_;
  std::array<PhrasalBlock, 3> blocks_;
  std::vector<EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
};

/// Embedding lookup without positions; ids must be < table rows.
Matrix embed(const std::vector<int>& ids, const Matrix& table);

}  // namespace vimc::encoder
