#include "vimc/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>

#include "vimc/autograd.hpp"
#include "vimc/encoder.hpp"
#include "vimc/heads.hpp"
#include "vimc/inference.hpp"
#include "vimc/random.hpp"

namespace vimc::gradcheck {

using ag::Matrix;
using ag::Tape;
using ag::Var;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Replaces every parameter value (including zero-initialized ones) so that
// no gradient path is trivially flat.
void randomize(ag::ParameterSet& ps, Rng& rng) {
  for (ag::Parameter* p : ps.all()) {
    const bool gain = p->name.ends_with(".gain");
    Matrix m = random_matrix(rng, p->value.rows(), p->value.cols(), gain ? 0.2 : 0.5);
    if (gain) m.array() += 1.0;
    p->value = m;
  }
}

Var weighted_sum(Tape& t, Var x, const Matrix& weights) { return ag::sum(ag::cmul(x, t.constant(weights))); }

// Probe weights scaled so the loss stays O(1); a large loss would push the
// finite-difference round-off above the error floor.
Matrix probe_weights(Rng& rng, Eigen::Index r, Eigen::Index c) {
  return random_matrix(rng, r, c, 1.0 / std::sqrt(static_cast<double>(r * c)));
}

struct Instance {
  ag::ParameterSet params;
  std::shared_ptr<void> modules;  // keeps module objects alive
  std::function<Var(Tape&)> loss;
};

std::unique_ptr<Instance> build(Component component, std::uint64_t seed, int d) {
  auto inst = std::make_unique<Instance>();
  Rng rng(seed);
  switch (component) {
    case Component::ViWordFormer: {
      encoder::EncoderConfig cfg;
      cfg.vocab_size = 12;
      cfg.d_model = d;
      cfg.heads = 2;
      cfg.layers = 1;
      cfg.viwordformer = true;
      cfg.phrasal_every_layer = true;
      auto enc = std::make_shared<encoder::TextEncoder>(inst->params, cfg, rng);
      randomize(inst->params, rng);
      struct Input {
        std::vector<int> ids;
        ag::Mask mask;
        encoder::TextRole role;
        Matrix weights;
      };
      std::vector<Input> inputs;
      const encoder::TextRole roles[] = {encoder::TextRole::Question, encoder::TextRole::Option,
                                         encoder::TextRole::Context};
      for (int r = 0; r < 3; ++r) {
        Input in;
        in.role = roles[r];
        const int n = 5;
        for (int i = 0; i < n; ++i) in.ids.push_back(kNumReserved + static_cast<int>(rng.bounded(8)));
        in.mask = ag::full_mask(n);
        if (r == 2) {  // trailing padding on one input
          in.ids.back() = kPad;
          in.mask.back() = 0;
        }
        in.weights = probe_weights(rng, n, d);
        inputs.push_back(std::move(in));
      }
      inst->modules = enc;
      inst->loss = [enc, inputs](Tape& t) {
        Var total = t.constant(Matrix::Zero(1, 1));
        for (const auto& in : inputs) total = ag::add(total, weighted_sum(t, enc->encode(t, in.ids, in.mask, in.role), in.weights));
        return total;
      };
      break;
    }
    case Component::OptionInference: {
      auto inf = std::make_shared<inference::OptionInference>(inst->params, inference::InferenceConfig{d}, rng);
      randomize(inst->params, rng);
      auto seq = [&](int n) { return std::pair<Matrix, ag::Mask>{random_matrix(rng, n, d, 1.0), ag::full_mask(n)}; };
      const auto question = seq(3);
      const auto context = seq(5);
      std::array<std::pair<Matrix, ag::Mask>, inference::kOptions> options;
      std::array<Matrix, inference::kOptions> weights;
      for (int k = 0; k < inference::kOptions; ++k) {
        options[static_cast<std::size_t>(k)] = seq(2 + k % 2);
      }
      for (int k = 0; k < inference::kOptions; ++k) {
        const auto n = options[static_cast<std::size_t>(k)].first.rows() + question.first.rows();
        weights[static_cast<std::size_t>(k)] = probe_weights(rng, n, d);
      }
      inst->modules = inf;
      inst->loss = [inf, question, context, options, weights](Tape& t) {
        inference::Sequence q{t.constant(question.first), question.second};
        inference::Sequence c{t.constant(context.first), context.second};
        std::array<inference::Sequence, inference::kOptions> opts;
        for (std::size_t k = 0; k < opts.size(); ++k) opts[k] = {t.constant(options[k].first), options[k].second};
        const auto out = inf->forward(t, q, opts, c);
        Var total = t.constant(Matrix::Zero(1, 1));
        for (std::size_t k = 0; k < opts.size(); ++k) {
          const Var f = out.final_features[k];
          if (f.rows() != weights[k].rows()) throw std::logic_error("gradcheck: unexpected final feature length");
          total = ag::add(total, weighted_sum(t, f, weights[k]));
        }
        return total;
      };
      break;
    }
    case Component::Heads: {
      const int vocab = 10;
      ag::Parameter& table = inst->params.add("embedding", random_matrix(rng, vocab, d, 1.0));
      ag::Parameter& scorer = inst->params.add("head.scorer", Matrix::Zero(d, 1));
      heads::DecoderConfig dc;
      dc.d_model = d;
      dc.heads = 2;
      dc.layers = 1;
      auto dec = std::make_shared<heads::ExplanationDecoder>(inst->params, dc, table, rng);
      randomize(inst->params, rng);
      std::array<Matrix, heads::kOptions> finals;
      for (std::size_t k = 0; k < finals.size(); ++k) finals[k] = random_matrix(rng, 3 + static_cast<int>(k % 2), d, 1.0).cwiseAbs();
      const Matrix question = random_matrix(rng, 3, d, 1.0);
      const Matrix context = random_matrix(rng, 4, d, 1.0);
      const int gold = static_cast<int>(rng.bounded(4));
      std::vector<int> targets;
      for (int i = 0; i < 4; ++i) targets.push_back(kNumReserved + static_cast<int>(rng.bounded(vocab - kNumReserved)));
      targets.push_back(kEos);
      inst->modules = dec;
      ag::Parameter* ws = &scorer;
      inst->loss = [dec, ws, finals, question, context, gold, targets](Tape& t) {
        std::array<heads::Sequence, heads::kOptions> seqs;
        for (std::size_t k = 0; k < seqs.size(); ++k) {
          seqs[k] = {t.constant(finals[k]), ag::full_mask(finals[k].rows())};
        }
        const Var scores = heads::option_scores(seqs, t.param(*ws));
        const Var mc = ag::cross_entropy_rows(scores, {gold});
        heads::Sequence q{t.constant(question), ag::full_mask(question.rows())};
        heads::Sequence c{t.constant(context), ag::full_mask(context.rows())};
        const auto memory = heads::decoder_memory(q, c, seqs[static_cast<std::size_t>(gold)]);
        return ag::add(mc, dec->teacher_forced_nll(t, memory, targets));
      };
      break;
    }
  }
  return inst;
}

}  // namespace

Component parse_component(const std::string& name) {
  if (name == "viwordformer") return Component::ViWordFormer;
  if (name == "option_inference") return Component::OptionInference;
  if (name == "heads") return Component::Heads;
  throw std::invalid_argument("unknown module '" + name + "' (expected viwordformer, option_inference or heads)");
}

std::string to_string(Component c) {
  switch (c) {
    case Component::ViWordFormer: return "viwordformer";
    case Component::OptionInference: return "option_inference";
    case Component::Heads: return "heads";
  }
  return "?";
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::string Report::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s seed %llu: max rel error %.3e (%s) tol %.1e -> %s", to_string(component).c_str(),
                static_cast<unsigned long long>(seed), max_relative_error, worst_parameter.c_str(), tolerance,
                passed ? "PASS" : "FAIL");
  std::string s = buf;
  if (!failure.empty()) s += ": " + failure;
  return s;
}

std::vector<std::string> parameter_names(Component component, const Options& options) {
  auto inst = build(component, 0, options.d_model);
  std::vector<std::string> names;
  for (const ag::Parameter* p : inst->params.all()) names.push_back(p->name);
  return names;
}

Report run(Component component, std::uint64_t seed, const Options& options) {
  auto inst = build(component, seed, options.d_model);
  if (options.corrupt_parameter && !inst->params.contains(*options.corrupt_parameter)) {
    throw std::invalid_argument("no parameter named '" + *options.corrupt_parameter + "'");
  }
  inst->params.zero_grad();
  {
    Tape t;
    t.backward(inst->loss(t));
  }
  if (options.corrupt_parameter) inst->params.at(*options.corrupt_parameter).grad.setZero();

  auto eval = [&]() {
    Tape t(false);
    return inst->loss(t).scalar();
  };

  Report r;
  r.component = component;
  r.seed = seed;
  r.tolerance = options.tolerance;
  for (ag::Parameter* p : inst->params.all()) {
    ParameterResult pr;
    pr.name = p->name;
    pr.entries = static_cast<std::size_t>(p->value.size());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double analytic = p->grad.data()[i];
      if (!std::isfinite(analytic)) {
        pr.finite = false;
        break;
      }
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + options.step;
      const double up = eval();
      p->value.data()[i] = saved - options.step;
      const double down = eval();
      p->value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      if (!std::isfinite(numeric)) {
        pr.finite = false;
        break;
      }
      pr.max_relative_error = std::max(pr.max_relative_error, relative_error(analytic, numeric, options.floor));
    }
    if (!pr.finite && r.failure.empty()) r.failure = "non-finite gradient in parameter " + pr.name;
    if (r.worst_parameter.empty() || pr.max_relative_error > r.max_relative_error) {
      r.max_relative_error = pr.max_relative_error;
      r.worst_parameter = pr.name;
    }
    r.parameters.push_back(std::move(pr));
  }
  r.passed = r.failure.empty() && r.max_relative_error <= options.tolerance;
  if (r.failure.empty() && !r.passed) r.failure = "gradient mismatch in parameter " + r.worst_parameter;
  return r;
}

}  // namespace vimc::gradcheck
