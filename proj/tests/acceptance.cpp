// Acceptance runner: one PASS/FAIL line per criterion. Thresholds are
// constants below; the exit status is non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "vimc/ablation.hpp"
#include "vimc/checkpoint.hpp"
#include "vimc/evaluate.hpp"
#include "vimc/gradcheck.hpp"
#include "vimc/heads.hpp"
#include "vimc/metrics.hpp"
#include "vimc/retrieval.hpp"
#include "vimc/synth.hpp"
#include "vimc/train.hpp"

using namespace vimc;

namespace {

// criterion 1
constexpr int kGradSeeds = 20;
constexpr double kGradTolerance = 1e-3;
constexpr double kGradStep = 1e-5;
constexpr int kGradDim = 8;
constexpr double kGradBudgetSeconds = 120.0;
// criterion 2
constexpr int kPhrasalDraws = 1000;
constexpr double kPhrasalTolerance = 1e-9;
// criterion 3
constexpr int kAttentionInstances = 25;
constexpr double kRowSumTolerance = 1e-9;
// criterion 4
constexpr int kPermutationInstances = 100;
constexpr std::size_t kPermutations = 24;
// criterion 5
constexpr double kOracleTolerance = 1e-6;
// criterion 6
constexpr int kSynthItems = 500;
constexpr int kE2eDim = 32;
constexpr int kE2eLayers = 2;
constexpr int kE2eHeads = 4;
constexpr double kE2eLearningRate = 5e-5;
constexpr int kE2eBatch = 32;
constexpr int kE2eMaxEpochs = 30;
constexpr double kE2eAccuracy = 0.95;
constexpr double kE2eBleu = 0.5;
constexpr double kE2eBudgetSeconds = 600.0;
constexpr int kE2eDecodeLength = 40;
// criterion 7
constexpr double kAblationSlack = 0.02;
const std::vector<std::uint64_t> kAblationSeeds{1, 2, 3};
// criterion 8
const std::vector<std::size_t> kRetrievalKs{10, 15, 20, 30};
// criterion 9
constexpr double kReproTolerance = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  gradcheck::Options opt;
  opt.tolerance = kGradTolerance;
  opt.step = kGradStep;
  opt.d_model = kGradDim;
  int failed = 0;
  double worst = 0.0;
  std::string worst_where;
  for (auto c : {gradcheck::Component::ViWordFormer, gradcheck::Component::OptionInference, gradcheck::Component::Heads}) {
    for (int s = 1; s <= kGradSeeds; ++s) {
      const auto r = gradcheck::run(c, static_cast<std::uint64_t>(s), opt);
      if (!r.passed) ++failed;
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_where = gradcheck::to_string(c) + "/" + r.worst_parameter;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < kGradBudgetSeconds,
          "3 modules x " + std::to_string(kGradSeeds) + " seeds, failures " + std::to_string(failed) + ", worst rel err " +
              fmt("%.2e", worst) + " (" + worst_where + "), " + fmt("%.1f s", secs)};
}

Outcome phrasal_matrix() {
  const auto r = checks::phrasal_suite(kPhrasalDraws, 20240601);
  return {r.ok() && r.cases == static_cast<std::size_t>(kPhrasalDraws) && r.worst <= kPhrasalTolerance,
          std::to_string(r.cases) + " draws, failures " + std::to_string(r.failures) + ", max |log-space - product| " +
              fmt("%.2e", r.worst) + (r.first_failure.empty() ? "" : ", first: " + r.first_failure)};
}

Outcome attention() {
  const auto r = checks::attention_suite(kAttentionInstances, 777);
  return {r.ok() && r.worst <= kRowSumTolerance,
          std::to_string(r.cases) + " attention checks, failures " + std::to_string(r.failures) + ", max row-sum error " +
              fmt("%.2e", r.worst) + (r.first_failure.empty() ? "" : ", first: " + r.first_failure)};
}

Outcome permutation() {
  const auto r = checks::permutation_suite(kPermutationInstances, 4242);
  return {r.ok() && r.cases == kPermutations * static_cast<std::size_t>(kPermutationInstances),
          std::to_string(r.cases) + " permuted forwards, failures " + std::to_string(r.failures) +
              (r.first_failure.empty() ? "" : ", first: " + r.first_failure)};
}

Outcome metric_oracles() {
  struct Case {
    std::string name;
    double got;
    double want;
  };
  std::vector<Case> cases;
  {
    retrieval::SentenceUnit a, b;
    a.id = 1;
    a.subject = b.subject = Subject::History;
    a.text = "a b";
    b.id = 2;
    b.text = "c d";
    const retrieval::SparseIndex idx({a, b});
    cases.push_back({"BM25 ln 2", idx.bm25_score({"a"}, 1), 0.693147});
  }
  {
    retrieval::RankedList x, y;
    x.entries = {{7, 2.0}, {8, 1.0}};
    y.entries = {{7, 5.0}};
    const auto f = retrieval::rrf_fuse({x, y});
    cases.push_back({"RRF 2/61", f.entries.at(0).score, 0.0327869});
    cases.push_back({"RRF 1/62", f.entries.at(1).score, 0.0161290});
  }
  cases.push_back({"f1_macro", metrics::classification_metrics({0, 1, 2, 3}, {0, 0, 0, 0}).f1_macro, 0.1});
  {
    const metrics::Tokens h{"a", "b", "c", "d"};
    const metrics::Tokens r{"a", "b", "c", "d", "e"};
    cases.push_back({"BLEU-4", metrics::corpus_bleu4({h}, {r}), 0.778801});
    cases.push_back({"ROUGE-L", metrics::rouge_l(h, r), 0.888889});
  }
  {
    const auto l = heads::multitask_loss({{0.25, 0.25, 0.25, 0.25}}, {1}, {std::vector<double>(3, -std::log(8.0))},
                                         heads::LossMode::Multitask);
    cases.push_back({"L_MC", l.multiple_choice, 1.386294});
    cases.push_back({"L_E", l.explanation, 6.238325});
  }
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const double dev = std::abs(c.got - c.want);
    if (!(dev <= kOracleTolerance)) ok = false;
    detail += (detail.empty() ? "" : ", ") + c.name + " " + fmt("%.7f", c.got);
  }
  return {ok, detail};
}

TrainConfig e2e_config() {
  TrainConfig c;
  c.d_model = kE2eDim;
  c.encoder_layers = kE2eLayers;
  c.decoder_layers = kE2eLayers;
  c.heads = kE2eHeads;
  c.learning_rate = kE2eLearningRate;
  c.batch_size = kE2eBatch;
  c.max_epochs = kE2eMaxEpochs;
  c.mode = heads::LossMode::Multitask;
  return c;
}

Outcome synthetic_end_to_end(bool verbose) {
  const auto t0 = Clock::now();
  const auto items = synth::synth_generate(kSynthItems, 1);
  const auto result = train(e2e_config(), items, {}, [&](const EpochRecord& r) {
    if (verbose) std::cerr << "  [6] " << format_epoch(r) << '\n';
  });
  double best_acc = 0.0;
  for (const auto& r : result.history) best_acc = std::max(best_acc, r.dev_accuracy);
  const auto model = instantiate(result.best);
  heads::DecodeOptions dec;
  dec.max_len = kE2eDecodeLength;
  const auto ev = evaluate_prepared(*model, result.data.dev, result.best.vocab, true, dec);
  const double bleu = ev.report.bleu4.value_or(0.0);
  const double secs = seconds_since(t0);
  const bool ok = best_acc >= kE2eAccuracy && bleu >= kE2eBleu && secs < kE2eBudgetSeconds;
  return {ok, "best dev acc " + fmt("%.4f", best_acc) + " (need >= " + fmt("%.2f", kE2eAccuracy) + "), dev BLEU-4 " +
                  fmt("%.4f", bleu) + " (need >= " + fmt("%.2f", kE2eBleu) + "), " +
                  std::to_string(result.history.size()) + " epochs, first/last L_MC " +
                  fmt("%.4f", result.history.front().loss_mc) + "/" + fmt("%.4f", result.history.back().loss_mc) +
                  ", " + fmt("%.0f s", secs)};
}

TrainConfig ablation_config() {
  TrainConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.learning_rate = 1e-3;
  c.batch_size = 32;
  c.max_epochs = 12;
  c.patience = 4;
  return c;
}

Outcome ablation(bool verbose) {
  const auto t0 = Clock::now();
  const auto train_items = synth::synth_generate(400, 11, 40);
  const auto test_items = synth::synth_generate(100, 12, 40);
  const auto res = run_ablation(ablation_config(), train_items, test_items, kAblationSeeds, [&](const std::string& s) {
    if (verbose) std::cerr << "  [7] " << s << '\n';
  });
  std::cout << res.table();
  bool complete = res.cells.size() == 4;
  for (const auto& cell : res.cells) complete = complete && cell.runs.size() == kAblationSeeds.size();
  bool directional = true;
  std::string detail;
  for (bool vwf : {true, false}) {
    const double single = res.cell(vwf, heads::LossMode::Single).mean_accuracy();
    const double multi = res.cell(vwf, heads::LossMode::Multitask).mean_accuracy();
    if (multi < single - kAblationSlack) directional = false;
    detail += std::string(detail.empty() ? "" : "; ") + "ViWordFormer " + (vwf ? "on" : "off") + ": multitask " +
              fmt("%.4f", multi) + " vs single " + fmt("%.4f", single);
  }
  return {complete && directional, "4 configs x " + std::to_string(kAblationSeeds.size()) + " seeds, " + detail + ", " +
                                       fmt("%.0f s", seconds_since(t0))};
}

Outcome retrieval_harness() {
  const std::string dir = VIMC_FIXTURES;
  auto units = retrieval::load_corpus(dir + "/corpus.jsonl");
  const retrieval::Retriever retriever(units, std::make_shared<retrieval::HashingEmbedder>(64));
  std::vector<retrieval::Query> queries;
  for (const auto& it : load_dataset(dir + "/queries.jsonl")) queries.push_back(retrieval::query_of(it));
  const auto report = retrieval::evaluate_retrieval(retriever, queries, retrieval::load_judgments(dir + "/judgments.jsonl"),
                                                    kRetrievalKs);
  std::cout << report.table();
  bool populated = units.size() == 50 && report.evaluated > 0;
  for (auto m : {retrieval::Mode::Sparse, retrieval::Mode::Dense, retrieval::Mode::Rrf}) {
    double recall = 0.0;
    for (auto k : kRetrievalKs) {
      auto it = report.cells.find({m, k});
      if (it == report.cells.end()) {
        populated = false;
        continue;
      }
      recall = std::max(recall, it->second.recall);
    }
    if (!(recall > 0.0)) populated = false;
  }
  return {populated && report.consistent,
          std::to_string(units.size()) + " units, " + std::to_string(report.evaluated) + " queries evaluated, " +
              std::to_string(report.flagged.size()) + " flagged, consistency " + (report.consistent ? "holds" : "broken")};
}

Outcome determinism() {
  TrainConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.learning_rate = 1e-3;
  c.batch_size = 16;
  c.max_epochs = 2;
  const auto items = synth::synth_generate(60, 21);
  const auto a = train(c, items);
  const auto b = train(c, items);
  const double dl = std::abs(a.history[0].loss_mc - b.history[0].loss_mc) + std::abs(a.history[0].loss_e - b.history[0].loss_e);

  const auto path = (std::filesystem::temp_directory_path() / "vimc_acceptance.ckpt").string();
  save_checkpoint(path, a.best);
  const auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  const auto test = synth::synth_generate(20, 22);
  heads::DecodeOptions dec;
  dec.max_len = 20;
  const auto before = evaluate(a.best, test, true, dec, &a.best.vocab);
  const auto after = evaluate(loaded, test, true, dec, &a.best.vocab);
  bool same_preds = before.predictions.size() == after.predictions.size();
  for (std::size_t i = 0; same_preds && i < before.predictions.size(); ++i) {
    same_preds = before.predictions[i].probabilities == after.predictions[i].probabilities &&
                 before.predictions[i].explanation == after.predictions[i].explanation;
  }
  const bool bitwise = before.report == after.report && same_preds;
  return {dl <= kReproTolerance && bitwise,
          "epoch-1 loss difference " + fmt("%.1e", dl) + ", checkpoint round-trip metrics " +
              (bitwise ? "bitwise identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  bool verbose = false;
  app.add_option("criteria", only, "Run only these criteria (1-9)");
  app.add_flag("-v,--verbose", verbose, "Print training progress");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"phrasal matrix suite", phrasal_matrix},
      {"attention suite", attention},
      {"option permutation equivariance", permutation},
      {"metric oracles", metric_oracles},
      {"synthetic end-to-end", [&] { return synthetic_end_to_end(verbose); }},
      {"ablation grid", [&] { return ablation(verbose); }},
      {"retrieval harness", retrieval_harness},
      {"determinism and persistence", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
