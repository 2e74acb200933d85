#include "vimc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace vimc::metrics {

Classification classification_metrics(const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("classification_metrics: length mismatch");
  constexpr int kLabels = 4;
  std::array<std::size_t, kLabels> tp{};
  std::array<std::size_t, kLabels> gold_count{};
  std::array<std::size_t, kLabels> pred_count{};
  Classification out;
  out.count = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= kLabels || predicted[i] < 0 || predicted[i] >= kLabels) {
      throw std::out_of_range("classification_metrics: label outside [0, 3]");
    }
    ++gold_count[static_cast<std::size_t>(gold[i])];
    ++pred_count[static_cast<std::size_t>(predicted[i])];
    if (gold[i] == predicted[i]) {
      ++tp[static_cast<std::size_t>(gold[i])];
      ++out.correct;
    }
  }
  if (gold.empty()) return out;
  out.accuracy = static_cast<double>(out.correct) / static_cast<double>(gold.size());
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kLabels; ++c) {
    const double precision = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
    const double recall = gold_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(gold_count[c]) : 0.0;
    if (precision + recall > 0.0) f1_sum += 2.0 * precision * recall / (precision + recall);
  }
  out.f1_macro = f1_sum / kLabels;
  return out;
}

namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

double corpus_bleu4(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("bleu: count mismatch");
  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double hyp_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<double>(hypotheses[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hypotheses[i], n);
      const auto r = ngram_counts(references[i], n);
      for (const auto& [gram, count] : h) {
        total[n - 1] += static_cast<double>(count);
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += static_cast<double>(std::min(count, it->second));
      }
    }
  }
  if (hyp_len == 0.0 || matched[0] == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double m = matched[n] > 0.0 ? matched[n] : kBleuEpsilon;
    const double t = total[n] > 0.0 ? total[n] : 1.0;
    log_sum += std::log(m / t);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& hypothesis, const Tokens& reference) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(hypothesis, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hypothesis.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

Generation generation_metrics(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("generation_metrics: count mismatch");
  std::vector<Tokens> hyps;
  std::vector<Tokens> refs;
  Generation out;
  double rouge_sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty()) {
      ++out.skipped;
      continue;
    }
    hyps.push_back(hypotheses[i]);
    refs.push_back(references[i]);
    rouge_sum += rouge_l(hypotheses[i], references[i]);
  }
  out.evaluated = hyps.size();
  if (!hyps.empty()) {
    out.bleu4 = corpus_bleu4(hyps, refs);
    out.rouge_l = rouge_sum / static_cast<double>(hyps.size());
  }
  return out;
}

}  // namespace vimc::metrics
