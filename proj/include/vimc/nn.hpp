#pragma once

// Small building blocks shared by the encoder and the explanation decoder.

#include <string>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/random.hpp"

namespace vimc::nn {

using ag::Mask;
using ag::Matrix;
using ag::Parameter;
using ag::ParameterSet;
using ag::Tape;
using ag::Var;

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);
  Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParameterSet& ps, const std::string& name, int width);
  Var operator()(Tape& t, Var x) const;
};

/// Scaled dot-product attention split over `heads` column blocks of the
/// projections. `modulation`, when given, is multiplied elementwise into
/// every head's attention weights after the softmax (shared across heads).
/// Attention and modulated matrices are appended to the optional outputs.
Var multihead_attention(Var queries, Var keys, Var values, int heads, const Mask& key_mask, bool causal,
                        const Var* modulation = nullptr, std::vector<Var>* attention = nullptr,
                        std::vector<Var>* modulated = nullptr);

/// Standard projection-based attention block (W_q, W_k, W_v, W_o).
struct AttentionBlock {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
  int heads = 1;

  static AttentionBlock create(ParameterSet& ps, const std::string& name, int d, int heads, Rng& rng);
  Var operator()(Tape& t, Var query_in, Var kv_in, const Mask& kv_mask, bool causal,
                 std::vector<Var>* attention = nullptr) const;
};

struct FeedForward {
  Linear in;
  Linear out;

  static FeedForward create(ParameterSet& ps, const std::string& name, int d, int hidden, Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

/// Sinusoidal position table, rows = positions.
Matrix sinusoidal_positions(Eigen::Index n, Eigen::Index d);

}  // namespace vimc::nn
