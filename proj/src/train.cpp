#include "vimc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "vimc/metrics.hpp"
#include "vimc/random.hpp"

namespace vimc {

Adam::Adam(ag::ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params.all()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const ag::Parameter* p : params_) {
    m_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::observe(double metric) {
  ++epochs_;
  if (epochs_ == 1 || metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

DivergenceError::DivergenceError(int epoch, int batch)
    : std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

DevSplit split_dev(const std::vector<McqItem>& items, double fraction, std::uint64_t seed) {
  if (items.size() < 2) throw std::invalid_argument("need at least two items to carve a dev split");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto n_dev = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
  n_dev = std::clamp<std::size_t>(n_dev, 1, items.size() - 1);
  DevSplit s;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_dev ? s.dev : s.train).push_back(items[order[i]]);
  return s;
}

std::vector<PreparedItem> prepare_items(const std::vector<McqItem>& items, const Vocabulary& vocab,
                                        const TrainConfig& config) {
  std::vector<PreparedItem> out;
  out.reserve(items.size());
  for (const McqItem& item : items) {
    if (!item.context || item.context->empty()) {
      throw std::invalid_argument("item '" + item.id + "' has no context; attach one with retrieval first");
    }
    out.push_back(prepare(tokenize_item(item, vocab), config.caps, config.explanation_cap));
  }
  return out;
}

PreparedData prepare_data(const std::vector<McqItem>& train, const std::vector<McqItem>& dev, const TrainConfig& config) {
  PreparedData d;
  d.vocab = build_vocabulary(train);
  d.train = prepare_items(train, d.vocab, config);
  d.dev = prepare_items(dev, d.vocab, config);
  return d;
}

std::string format_epoch(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %3d  L_MC %.6f  L_E %.6f  dev_acc %.4f  dev_f1 %.4f%s", r.epoch, r.loss_mc,
                r.loss_e, r.dev_accuracy, r.dev_f1, r.improved ? "  *" : "");
  return buf;
}

namespace {

metrics::Classification dev_metrics(const ViMultiChoice& model, const std::vector<PreparedItem>& dev) {
  std::vector<int> gold;
  std::vector<int> pred;
  for (const PreparedItem& item : dev) {
    gold.push_back(item.answer);
    pred.push_back(model.predict(item, false).answer);
  }
  return metrics::classification_metrics(gold, pred);
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<McqItem>& train_items, const std::vector<McqItem>& dev_items,
                  const EpochCallback& on_epoch) {
  validate(config);
  if (dev_items.empty()) {
    DevSplit split = split_dev(train_items, config.dev_fraction, config.seed);
    return train_prepared(config, prepare_data(split.train, split.dev, config), on_epoch);
  }
  return train_prepared(config, prepare_data(train_items, dev_items, config), on_epoch);
}

TrainResult train_prepared(const TrainConfig& config, PreparedData data, const EpochCallback& on_epoch) {
  validate(config);
  if (data.train.empty()) throw std::invalid_argument("training set is empty");
  if (data.dev.empty()) throw std::invalid_argument("dev set is empty");

  ViMultiChoice model(model_config(config, data.vocab.size()));
  Adam adam(model.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  EarlyStopping stopper(config.patience);
  Rng order_rng(config.seed + 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  result.best.config = config;
  result.best.model = model.config();
  result.best.vocab = data.vocab;

  std::vector<std::size_t> order(data.train.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    double mc_sum = 0.0;
    double e_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto n = static_cast<double>(end - start);
      std::size_t n_e = 0;
      if (config.mode == heads::LossMode::Multitask) {
        for (std::size_t i = start; i < end; ++i) n_e += data.train[order[i]].explanation ? 1 : 0;
      }
      model.parameters().zero_grad();
      double batch_mc = 0.0;
      double batch_e = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        ag::Tape t;
        ItemLoss l;
        try {
          l = model.loss(t, data.train[order[i]], config.mode);
        } catch (const std::domain_error&) {
          // non-finite activations from diverged weights
          throw DivergenceError(epoch, batches + 1);
        }
        ag::Var total = ag::scale(l.multiple_choice, 1.0 / n);
        batch_mc += l.multiple_choice.scalar() / n;
        if (l.explanation) {
          total = ag::add(total, ag::scale(*l.explanation, 1.0 / static_cast<double>(n_e)));
          batch_e += l.explanation->scalar() / static_cast<double>(n_e);
        }
        if (!std::isfinite(total.scalar())) throw DivergenceError(epoch, batches + 1);
        t.backward(total);
      }
      adam.step();
      mc_sum += batch_mc;
      e_sum += batch_e;
      ++batches;
    }

    const auto dev = dev_metrics(model, data.dev);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_mc = mc_sum / batches;
    rec.loss_e = e_sum / batches;
    rec.dev_accuracy = dev.accuracy;
    rec.dev_f1 = dev.f1_macro;
    rec.improved = stopper.observe(dev.f1_macro);
    if (rec.improved) {
      result.best.arrays = snapshot_parameters(model.parameters());
      result.best.epoch = epoch;
      result.best.best = {"dev_f1_macro", dev.f1_macro, epoch};
      result.best.rng_state = order_rng.state();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.data = std::move(data);
  return result;
}

}  // namespace vimc
