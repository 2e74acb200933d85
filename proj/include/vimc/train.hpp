#pragma once

// Adam training loop with dev-set early stopping.

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vimc/checkpoint.hpp"
#include "vimc/config.hpp"
#include "vimc/data.hpp"
#include "vimc/model.hpp"

namespace vimc {

class Adam {
 public:
  Adam(ag::ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// One update from the gradients currently stored in the parameters.
  void step();
  long steps() const { return t_; }

 private:
  std::vector<ag::Parameter*> params_;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Tracks the best metric; stop once the best is `patience` epochs old.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records one epoch's metric. Returns true when it is a new best
  /// (strictly greater; the first observation always is).
  bool observe(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  int epochs_seen() const { return epochs_; }

 private:
  int patience_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int batch);
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

struct DevSplit {
  std::vector<McqItem> train;
  std::vector<McqItem> dev;
};

/// Seeded shuffle, then the first round(fraction * n) items (at least one)
/// form the dev set.
DevSplit split_dev(const std::vector<McqItem>& items, double fraction, std::uint64_t seed);

struct PreparedData {
  Vocabulary vocab;
  std::vector<PreparedItem> train;
  std::vector<PreparedItem> dev;
};

/// Builds the vocabulary from the training split and tokenizes both splits.
/// Items must carry a context.
PreparedData prepare_data(const std::vector<McqItem>& train, const std::vector<McqItem>& dev, const TrainConfig& config);

std::vector<PreparedItem> prepare_items(const std::vector<McqItem>& items, const Vocabulary& vocab,
                                        const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double loss_mc = 0.0;  // mean over batches
  double loss_e = 0.0;
  double dev_accuracy = 0.0;
  double dev_f1 = 0.0;
  bool improved = false;
};

std::string format_epoch(const EpochRecord& r);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  PreparedData data;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// When `dev` is empty a dev split is carved from `train` by seed.
TrainResult train(const TrainConfig& config, const std::vector<McqItem>& train, const std::vector<McqItem>& dev = {},
                  const EpochCallback& on_epoch = {});

/// Trains a fresh model on already tokenized splits.
TrainResult train_prepared(const TrainConfig& config, PreparedData data, const EpochCallback& on_epoch = {});

}  // namespace vimc
