#include "vimc/ablation.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "vimc/evaluate.hpp"
#include "vimc/train.hpp"

namespace vimc {

namespace {

template <typename F>
double mean_of(const std::vector<AblationRun>& runs, F field) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += field(r);
  return s / static_cast<double>(runs.size());
}

}  // namespace

std::string AblationCell::label() const {
  return std::string(viwordformer ? "with ViWordFormer" : "without ViWordFormer") + ", " + to_string(mode);
}

double AblationCell::mean_accuracy() const { return mean_of(runs, [](const AblationRun& r) { return r.accuracy; }); }
double AblationCell::mean_f1() const { return mean_of(runs, [](const AblationRun& r) { return r.f1_macro; }); }
double AblationCell::mean_bleu4() const { return mean_of(runs, [](const AblationRun& r) { return r.bleu4; }); }
double AblationCell::mean_rouge_l() const { return mean_of(runs, [](const AblationRun& r) { return r.rouge_l; }); }

const AblationCell& AblationResult::cell(bool viwordformer, heads::LossMode mode) const {
  for (const auto& c : cells) {
    if (c.viwordformer == viwordformer && c.mode == mode) return c;
  }
  throw std::out_of_range("ablation cell not present");
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os << "Configuration                    | seeds |    Acc |     F1 | BLEU-4 | ROUGE-L\n";
  os << "---------------------------------+-------+--------+--------+--------+--------\n";
  for (const auto& c : cells) {
    char buf[200];
    const bool multi = c.mode == heads::LossMode::Multitask;
    char bleu[16] = "     -";
    char rouge[16] = "     -";
    if (multi) {
      std::snprintf(bleu, sizeof bleu, "%6.2f", 100.0 * c.mean_bleu4());
      std::snprintf(rouge, sizeof rouge, "%6.2f", 100.0 * c.mean_rouge_l());
    }
    std::snprintf(buf, sizeof buf, "%-32s | %5zu | %6.2f | %6.2f | %s | %s\n", c.label().c_str(), c.runs.size(),
                  100.0 * c.mean_accuracy(), 100.0 * c.mean_f1(), bleu, rouge);
    os << buf;
  }
  return os.str();
}

AblationResult run_ablation(const TrainConfig& base, const std::vector<McqItem>& train_items,
                            const std::vector<McqItem>& test, const std::vector<std::uint64_t>& seeds,
                            const AblationLog& log) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  AblationResult result;
  for (bool vwf : {true, false}) {
    for (heads::LossMode mode : {heads::LossMode::Single, heads::LossMode::Multitask}) {
      AblationCell cell;
      cell.viwordformer = vwf;
      cell.mode = mode;
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.viwordformer = vwf;
        cfg.mode = mode;
        cfg.seed = seed;
        const TrainResult tr = train(cfg, train_items);
        const Evaluation ev = evaluate(tr.best, test, mode == heads::LossMode::Multitask);
        AblationRun run;
        run.seed = seed;
        run.epochs = static_cast<int>(tr.history.size());
        run.accuracy = ev.report.accuracy;
        run.f1_macro = ev.report.f1_macro;
        run.bleu4 = ev.report.bleu4.value_or(0.0);
        run.rouge_l = ev.report.rouge_l.value_or(0.0);
        if (log) {
          char buf[200];
          std::snprintf(buf, sizeof buf, "%s seed %llu: %d epochs, acc %.4f f1 %.4f bleu %.4f rouge %.4f",
                        cell.label().c_str(), static_cast<unsigned long long>(seed), run.epochs, run.accuracy,
                        run.f1_macro, run.bleu4, run.rouge_l);
          log(buf);
        }
        cell.runs.push_back(run);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace vimc
