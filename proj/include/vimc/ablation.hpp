#pragma once

// {ViWordFormer on/off} x {single, multitask} training grid.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vimc/config.hpp"
#include "vimc/data.hpp"

namespace vimc {

struct AblationRun {
  std::uint64_t seed = 0;
  int epochs = 0;
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double bleu4 = 0.0;  // 0 in single mode
  double rouge_l = 0.0;
};

struct AblationCell {
  bool viwordformer = true;
  heads::LossMode mode = heads::LossMode::Multitask;
  std::vector<AblationRun> runs;

  std::string label() const;
  double mean_accuracy() const;
  double mean_f1() const;
  double mean_bleu4() const;
  double mean_rouge_l() const;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // order: (on, single), (on, multi), (off, single), (off, multi)

  const AblationCell& cell(bool viwordformer, heads::LossMode mode) const;
  /// Configuration | acc | F1 | BLEU-4 | ROUGE-L, means over seeds in percent.
  std::string table() const;
};

using AblationLog = std::function<void(const std::string&)>;

/// Trains every configuration for every seed on `train` (dev carved by seed)
/// and evaluates on `test`.
AblationResult run_ablation(const TrainConfig& base, const std::vector<McqItem>& train, const std::vector<McqItem>& test,
                            const std::vector<std::uint64_t>& seeds, const AblationLog& log = {});

}  // namespace vimc
