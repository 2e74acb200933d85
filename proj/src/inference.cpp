#include "vimc/inference.hpp"

#include <cmath>
#include <stdexcept>

#include "vimc/nn.hpp"

namespace vimc::inference {

Sequence fuse_question_option(const Sequence& question, const Sequence& option) {
  if (question.rows.cols() != option.rows.cols()) throw std::invalid_argument("fuse_question_option: width mismatch");
  Sequence out;
  out.rows = question.rows.rows() == 0 ? option.rows : ag::concat_rows({question.rows, option.rows});
  out.mask = question.mask;
  out.mask.insert(out.mask.end(), option.mask.begin(), option.mask.end());
  return out;
}

Var trilinear_attention(Var a, Var b, Var weights, const Mask& b_mask) {
  const Eigen::Index d = a.cols();
  if (b.cols() != d) throw std::invalid_argument("trilinear_attention: width mismatch");
  if (weights.rows() != 3 * d || weights.cols() != 1) throw std::invalid_argument("trilinear_attention: weights must be 3d x 1");
  if (!a.value().allFinite() || !b.value().allFinite()) throw std::domain_error("trilinear_attention: non-finite input");
  Var w_a = ag::slice_rows(weights, 0, d);
  Var w_b = ag::slice_rows(weights, d, d);
  Var w_ab = ag::slice_rows(weights, 2 * d, d);
  Var scores = ag::matmul_nt(ag::mul_row(a, ag::transpose(w_ab)), b);
  scores = ag::add_col(scores, ag::matmul(a, w_a));
  scores = ag::add_row(scores, ag::transpose(ag::matmul(b, w_b)));
  return ag::softmax_rows(scores, &b_mask);
}

Var keep_eliminate(Var fused, Var attended) {
  return ag::concat_cols({ag::sub(fused, attended), ag::cmul(fused, attended)});
}

Comparison compare_options(const Sequence& fk, const Sequence& fl, Var pair_weights, std::vector<Var>* attention) {
  Var att = trilinear_attention(fk.rows, fl.rows, pair_weights, fl.mask);
  if (attention) attention->push_back(att);
  Var attended = ag::matmul(att, fl.rows);
  return {attended, ag::sub(fk.rows, attended), ag::cmul(fk.rows, attended)};
}

Var aggregate_comparisons(Var fused, const std::vector<Comparison>& partners, Var wc, Var bc) {
  if (partners.size() != kOptions - 1) throw std::invalid_argument("aggregate_comparisons: expected three partners");
  std::vector<Var> diffs;
  std::vector<Var> prods;
  std::vector<Var> atts;
  for (const auto& p : partners) {
    diffs.push_back(p.difference);
    prods.push_back(p.product);
    atts.push_back(p.attended);
  }
  Var features = ag::concat_cols(
      {fused, ag::symmetric_mean(diffs), ag::symmetric_mean(prods), ag::symmetric_mean(atts)});
  return ag::tanh(ag::add_row(ag::matmul(features, wc), bc));
}

Var gated_fusion(Var fused, Var compared, Var wg, Var bg, Var* gate_out) {
  if (fused.rows() != compared.rows() || fused.cols() != compared.cols()) {
    throw std::invalid_argument("gated_fusion: shape mismatch");
  }
  Var gate = ag::sigmoid(ag::add_row(ag::matmul(ag::concat_cols({fused, compared}), wg), bg));
  if (gate_out) *gate_out = gate;
  return ag::add(ag::mul_col(fused, gate), ag::mul_col(compared, ag::affine(gate, -1.0, 1.0)));
}

CoAttention context_coattention(const Sequence& option, const Sequence& context, Var w_option_context,
                                Var w_context_option) {
  if (context.rows.rows() == 0) throw std::invalid_argument("retrieval produced no context");
  CoAttention out;
  out.option_to_context = trilinear_attention(option.rows, context.rows, w_option_context, context.mask);
  out.context_to_option = trilinear_attention(context.rows, option.rows, w_context_option, option.mask);
  Var context_view = ag::concat_cols({context.rows, ag::matmul(out.context_to_option, option.rows)});
  out.output = ag::matmul(out.option_to_context, context_view);
  return out;
}

FinalRepresentation final_option_representation(Var option, Var coattended, const Mask& mask, Var wp, Var bp,
                                                Var w_self, Var wo, Var bo) {
  FinalRepresentation r;
  r.projected = ag::relu(ag::add_row(ag::matmul(ag::concat_cols({option, coattended}), wp), bp));
  r.self_attention = trilinear_attention(r.projected, r.projected, w_self, mask);
  r.self_attended = ag::matmul(r.self_attention, r.projected);
  Var features = ag::concat_cols({r.projected, r.self_attended, ag::sub(r.projected, r.self_attended),
                                  ag::cmul(r.projected, r.self_attended)});
  r.output = ag::relu(ag::add_row(ag::matmul(features, wo), bo));
  return r;
}

// ----------------------------------------------------------------- module

OptionInference::OptionInference(ParameterSet& ps, const InferenceConfig& config, Rng& rng, const std::string& prefix) {
  const int d = config.d_model;
  if (d <= 0) throw std::invalid_argument("inference: d_model must be positive");
  auto lin = [&](int rows) { return nn::normal_matrix(rows, d, 1.0 / std::sqrt(static_cast<double>(rows)), rng); };
  auto tri = [&](const std::string& name) {
    return &ps.add(prefix + "." + name, nn::normal_matrix(3 * d, 1, 1.0 / std::sqrt(3.0 * d), rng));
  };
  w_pair_ = tri("pair_attention");
  w_option_context_ = tri("option_context_attention");
  w_context_option_ = tri("context_option_attention");
  w_self_ = tri("self_attention");
  wc_ = &ps.add(prefix + ".compare.w", lin(4 * d));
  bc_ = &ps.add(prefix + ".compare.b", Matrix::Zero(1, d));
  wg_ = &ps.add(prefix + ".gate.w", nn::normal_matrix(2 * d, 1, 1.0 / std::sqrt(2.0 * d), rng));
  bg_ = &ps.add(prefix + ".gate.b", Matrix::Zero(1, 1));
  wp_ = &ps.add(prefix + ".project.w", lin(2 * d + d));
  bp_ = &ps.add(prefix + ".project.b", Matrix::Zero(1, d));
  wo_ = &ps.add(prefix + ".output.w", lin(4 * d));
  bo_ = &ps.add(prefix + ".output.b", Matrix::Zero(1, d));
}

OptionOutputs OptionInference::forward(Tape& t, const Sequence& question, const std::array<Sequence, kOptions>& options,
                                       const Sequence& context, AttentionTrace* trace) const {
  if (context.rows.rows() == 0) throw std::invalid_argument("retrieval produced no context");
  OptionOutputs out;
  for (int k = 0; k < kOptions; ++k) out.fused[k] = fuse_question_option(question, options[k]);
  Var w_pair = t.param(*w_pair_);
  for (int k = 0; k < kOptions; ++k) {
    const auto& fk = out.fused[k];
    std::vector<Comparison> partners;
    for (int l = 0; l < kOptions; ++l) {
      if (l == k) continue;
      std::vector<Var> att;
      partners.push_back(compare_options(fk, out.fused[l], w_pair, trace ? &att : nullptr));
      if (trace) (*trace)["pair/" + std::to_string(k) + "/" + std::to_string(l)] = att.front().value();
    }
    Var compared = aggregate_comparisons(fk.rows, partners, t.param(*wc_), t.param(*bc_));
    Var gate;
    Var gated = gated_fusion(fk.rows, compared, t.param(*wg_), t.param(*bg_), &gate);
    CoAttention co = context_coattention({gated, fk.mask}, context, t.param(*w_option_context_),
                                         t.param(*w_context_option_));
    FinalRepresentation fin = final_option_representation(gated, co.output, fk.mask, t.param(*wp_), t.param(*bp_),
                                                          t.param(*w_self_), t.param(*wo_), t.param(*bo_));
    if (trace) {
      const std::string ks = std::to_string(k);
      (*trace)["gate/" + ks] = gate.value();
      (*trace)["option_context/" + ks] = co.option_to_context.value();
      (*trace)["context_option/" + ks] = co.context_to_option.value();
      (*trace)["self/" + ks] = fin.self_attention.value();
    }
    out.final_features[k] = fin.output;
  }
  return out;
}

}  // namespace vimc::inference
