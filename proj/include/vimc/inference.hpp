#pragma once

// Option comparison network: every question-fused option is compared with
// the other three (trilinear attention + keep/eliminate features), gated
// against its own features, co-attended with the context and fused into a
// final per-token representation.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/random.hpp"

namespace vimc::inference {

using ag::Mask;
using ag::Matrix;
using ag::Parameter;
using ag::ParameterSet;
using ag::Tape;
using ag::Var;

inline constexpr int kOptions = 4;

struct Sequence {
  Var rows;
  Mask mask;
};

/// [f_Q ; f_O] along the sequence axis, masks in the same order.
Sequence fuse_question_option(const Sequence& question, const Sequence& option);

/// s_ij = w^T [a_i ; b_j ; a_i ⊙ b_j] with w a 3d x 1 column; row softmax
/// over columns whose b_mask entry is 1.
Var trilinear_attention(Var a, Var b, Var weights, const Mask& b_mask);

/// [f - f' ; f ⊙ f'], n x 2d.
Var keep_eliminate(Var fused, Var attended);

struct Comparison {
  Var attended;   // Attn(f_k, f_l) f_l
  Var difference; // f_k - attended
  Var product;    // f_k ⊙ attended
};

Comparison compare_options(const Sequence& fk, const Sequence& fl, Var pair_weights, std::vector<Var>* attention = nullptr);

/// tanh([f ; mean diff ; mean product ; mean attended] W_C + b_C) with
/// partner-order-independent means; requires exactly three partners.
Var aggregate_comparisons(Var fused, const std::vector<Comparison>& partners, Var wc, Var bc);

/// g = sigmoid([f ; f̄] W_g + b_g) per token; g f + (1 - g) f̄.
Var gated_fusion(Var fused, Var compared, Var wg, Var bg, Var* gate_out = nullptr);

struct CoAttention {
  Var output;            // n_Qk x 2d
  Var option_to_context; // n_Qk x n_P
  Var context_to_option; // n_P x n_Qk
};

/// A^O = Attn(f^O, f_P), A^P = Attn(f_P, f^O), output = A^O [f_P ; A^P f^O].
CoAttention context_coattention(const Sequence& option, const Sequence& context, Var w_option_context,
                                Var w_context_option);

struct FinalRepresentation {
  Var output;          // f_k, n_Qk x d, non-negative
  Var projected;       // f̃_k
  Var self_attended;   // f̄_k
  Var self_attention;  // Attn(f̃_k, f̃_k)
};

/// f̃ = ReLU([f^O ; f̂] W_P + b_P); f̄ = Attn(f̃, f̃) f̃;
/// f_k = ReLU([f̃ ; f̄ ; f̃ - f̄ ; f̃ ⊙ f̄] W_O + b_O).
FinalRepresentation final_option_representation(Var option, Var coattended, const Mask& mask, Var wp, Var bp,
                                                Var w_self, Var wo, Var bo);

// ----------------------------------------------------------------- module

struct InferenceConfig {
  int d_model = 64;
};

/// Named attention matrices of one forward pass, keyed by
/// "<stage>/<option>[/<partner>]".
using AttentionTrace = std::map<std::string, Matrix>;

struct OptionOutputs {
  std::array<Sequence, kOptions> fused;
  std::array<Var, kOptions> final_features;
};

class OptionInference {
 public:
  OptionInference(ParameterSet& ps, const InferenceConfig& config, Rng& rng, const std::string& prefix = "inference");

  /// Options are processed in fixed order 0..3. Throws when the context is
  /// empty ("retrieval produced no context").
  OptionOutputs forward(Tape& t, const Sequence& question, const std::array<Sequence, kOptions>& options,
                        const Sequence& context, AttentionTrace* trace = nullptr) const;

 private:
  Parameter* w_pair_;
  Parameter* w_option_context_;
  Parameter* w_context_option_;
  Parameter* w_self_;
  Parameter* wc_;
  Parameter* bc_;
  Parameter* wg_;
  Parameter* bg_;
  Parameter* wp_;
  Parameter* bp_;
  Parameter* wo_;
  Parameter* bo_;
};

}  // namespace vimc::inference
