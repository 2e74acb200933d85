#include "vimc/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace vimc {

namespace {

std::vector<BreakdownRow> breakdown(const std::map<std::string, std::pair<std::vector<int>, std::vector<int>>>& groups) {
  std::vector<BreakdownRow> rows;
  for (const auto& [name, gp] : groups) {
    const auto m = metrics::classification_metrics(gp.first, gp.second);
    rows.push_back({name, m.count, m.accuracy, m.f1_macro});
  }
  return rows;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * v);
  return buf;
}

metrics::Tokens surface(const std::vector<int>& ids, const Vocabulary& vocab) {
  metrics::Tokens out;
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace

std::string MetricReport::table() const {
  std::ostringstream os;
  std::size_t width = std::string("overall").size();
  for (const auto& r : by_subject) width = std::max(width, r.group.size() + 8);
  for (const auto& r : by_grade) width = std::max(width, r.group.size() + 6);
  const int w = static_cast<int>(width);
  char head[160];
  std::snprintf(head, sizeof head, "%-*s %5s  %6s  %6s\n", w, "group", "n", "acc", "f1");
  os << head;
  auto row = [&](const std::string& name, std::size_t n, double acc, double f1) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %5zu  %s  %s\n", w, name.c_str(), n, percent(acc).c_str(), percent(f1).c_str());
    os << buf;
  };
  row("overall", count, accuracy, f1_macro);
  for (const auto& r : by_subject) row("subject:" + r.group, r.count, r.accuracy, r.f1_macro);
  for (const auto& r : by_grade) row("grade:" + r.group, r.count, r.accuracy, r.f1_macro);
  if (bleu4) {
    os << "explanations " << explanations_evaluated << " (skipped " << explanations_skipped << ")  BLEU-4 "
       << percent(*bleu4) << "  ROUGE-L " << percent(*rouge_l) << '\n';
  }
  return os.str();
}

double vocabulary_coverage(const std::vector<McqItem>& items, const Vocabulary& vocab) {
  std::size_t known = 0;
  std::size_t total = 0;
  auto count = [&](const std::string& text) {
    for (const auto& w : default_tokenizer().split(text)) {
      ++total;
      known += vocab.contains(w) ? 1 : 0;
    }
  };
  for (const McqItem& item : items) {
    count(item.question);
    for (const auto& o : item.options) count(o);
    if (item.context) count(*item.context);
  }
  return total == 0 ? 1.0 : static_cast<double>(known) / static_cast<double>(total);
}

Evaluation evaluate_prepared(const ViMultiChoice& model, const std::vector<PreparedItem>& items,
                             const Vocabulary& vocab, bool generate, const heads::DecodeOptions& decode) {
  Evaluation ev;
  std::vector<int> gold;
  std::vector<int> pred;
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_subject;
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_grade;
  std::vector<metrics::Tokens> hyps;
  std::vector<metrics::Tokens> refs;
  for (const PreparedItem& item : items) {
    Prediction p = model.predict(item, generate, decode);
    gold.push_back(item.answer);
    pred.push_back(p.answer);
    auto& s = by_subject[std::string(to_string(item.subject))];
    s.first.push_back(item.answer);
    s.second.push_back(p.answer);
    auto& g = by_grade[std::to_string(item.grade)];
    g.first.push_back(item.answer);
    g.second.push_back(p.answer);
    if (generate && item.explanation) {
      hyps.push_back(surface(p.explanation, vocab));
      refs.push_back(surface(*item.explanation, vocab));
    }
    ev.predictions.push_back(std::move(p));
  }
  const auto cls = metrics::classification_metrics(gold, pred);
  ev.report.count = cls.count;
  ev.report.accuracy = cls.accuracy;
  ev.report.f1_macro = cls.f1_macro;
  ev.report.by_subject = breakdown(by_subject);
  ev.report.by_grade = breakdown(by_grade);
  if (generate && !hyps.empty()) {
    const auto gen = metrics::generation_metrics(hyps, refs);
    ev.report.explanations_evaluated = gen.evaluated;
    ev.report.explanations_skipped = gen.skipped;
    if (gen.evaluated > 0) {
      ev.report.bleu4 = gen.bleu4;
      ev.report.rouge_l = gen.rouge_l;
    }
  }
  return ev;
}

Evaluation evaluate(const Checkpoint& ckpt, const std::vector<McqItem>& test, bool generate,
                    const heads::DecodeOptions& decode, const Vocabulary* expected_vocab) {
  if (ckpt.vocab.size() != ckpt.model.vocab_size) {
    throw VocabularyMismatch("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                             " entries but the model was built for " + std::to_string(ckpt.model.vocab_size));
  }
  if (expected_vocab && expected_vocab->fingerprint() != ckpt.vocab.fingerprint()) {
    throw VocabularyMismatch("data vocabulary differs from the checkpoint vocabulary");
  }
  const double coverage = vocabulary_coverage(test, ckpt.vocab);
  if (coverage < kMinVocabularyCoverage) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "vocabulary mismatch: only %.1f%% of test tokens are known to the checkpoint",
                  100.0 * coverage);
    throw VocabularyMismatch(buf);
  }
  const auto model = instantiate(ckpt);
  std::vector<PreparedItem> items;
  for (const McqItem& item : test) {
    if (!item.context || item.context->empty()) {
      throw std::invalid_argument("item '" + item.id + "' has no context; attach one with retrieval first");
    }
    items.push_back(prepare(tokenize_item(item, ckpt.vocab), ckpt.config.caps, ckpt.config.explanation_cap));
  }
  return evaluate_prepared(*model, items, ckpt.vocab, generate, decode);
}

void write_predictions(std::ostream& out, const std::vector<Prediction>& predictions, const Vocabulary& vocab) {
  for (const Prediction& p : predictions) {
    nlohmann::json j;
    j["id"] = p.id;
    j["answer"] = std::string(1, static_cast<char>('A' + p.answer));
    j["probabilities"] = std::vector<double>(p.probabilities.begin(), p.probabilities.end());
    j["explanation"] = detokenize(p.explanation, vocab);
    out << j.dump() << '\n';
  }
}

void write_predictions(const std::string& path, const std::vector<Prediction>& predictions, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions to " + path);
  write_predictions(out, predictions, vocab);
}

}  // namespace vimc
