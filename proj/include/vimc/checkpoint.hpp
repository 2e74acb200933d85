#pragma once

// Binary checkpoint: magic, version, JSON header, then named float64 arrays.
//
//   "VIMCCKPT" | u32 version | u64 header bytes | header JSON
//   u32 array count | per array: u32 name bytes, name, i64 rows, i64 cols,
//   rows*cols little-endian doubles in column-major order

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vimc/autograd.hpp"
#include "vimc/config.hpp"
#include "vimc/data.hpp"
#include "vimc/model.hpp"

namespace vimc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct BestMetric {
  std::string name = "dev_f1_macro";
  double value = 0.0;
  int epoch = 0;
  bool operator==(const BestMetric&) const = default;
};

struct Checkpoint {
  TrainConfig config;
  ModelConfig model;
  Vocabulary vocab;
  int epoch = 0;
  BestMetric best;
  std::string rng_state;
  std::vector<std::pair<std::string, ag::Matrix>> arrays;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ModelConfig model_config(const TrainConfig& config, int vocab_size);

/// Copies every parameter value of the model.
std::vector<std::pair<std::string, ag::Matrix>> snapshot_parameters(const ag::ParameterSet& params);
/// Writes arrays back; names and shapes must match the model exactly.
void restore_parameters(ag::ParameterSet& params, const std::vector<std::pair<std::string, ag::Matrix>>& arrays);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Builds a model from the checkpoint's config and loads its parameters.
std::unique_ptr<ViMultiChoice> instantiate(const Checkpoint& ckpt);

}  // namespace vimc
