#pragma once

// Training configuration and its flat key=value file form.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "vimc/data.hpp"
#include "vimc/heads.hpp"
#include "vimc/retrieval.hpp"

namespace vimc {

struct TrainConfig {
  double learning_rate = 5e-5;
  int batch_size = 32;
  TruncationCaps caps{};
  int explanation_cap = 300;
  int patience = 10;
  int max_epochs = 200;
  std::uint64_t seed = 13;
  heads::LossMode mode = heads::LossMode::Multitask;
  bool viwordformer = true;
  bool phrasal_every_layer = false;
  int d_model = 64;
  int encoder_layers = 2;
  int heads = 4;
  int decoder_layers = 2;
  int retrieval_k = 15;
  retrieval::Mode retrieval_mode = retrieval::Mode::Rrf;
  double dev_fraction = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Paths are optional; the CLI fills in what is missing.
  std::string train_path;
  std::string dev_path;
  std::string corpus_path;
  std::string checkpoint_path;
  std::string log_path;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& config);

/// One `key = value` per line; `#` starts a comment; unknown keys throw.
TrainConfig parse_train_config(std::istream& in);
TrainConfig load_train_config(const std::string& path);
/// Applies a single key/value pair.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string to_text(const TrainConfig& config);

std::string to_string(heads::LossMode mode);
heads::LossMode parse_loss_mode(const std::string& text);

}  // namespace vimc
