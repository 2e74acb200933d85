#include "vimc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace vimc {

namespace {

constexpr char kMagic[8] = {'V', 'I', 'M', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint truncated while reading " + what);
  return v;
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

ModelConfig model_config(const TrainConfig& c, int vocab_size) {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.d_model = c.d_model;
  m.heads = c.heads;
  m.encoder_layers = c.encoder_layers;
  m.decoder_layers = c.decoder_layers;
  m.viwordformer = c.viwordformer;
  m.phrasal_every_layer = c.phrasal_every_layer;
  m.seed = c.seed;
  return m;
}

std::vector<std::pair<std::string, ag::Matrix>> snapshot_parameters(const ag::ParameterSet& params) {
  std::vector<std::pair<std::string, ag::Matrix>> out;
  for (const ag::Parameter* p : params.all()) out.emplace_back(p->name, p->value);
  return out;
}

void restore_parameters(ag::ParameterSet& params, const std::vector<std::pair<std::string, ag::Matrix>>& arrays) {
  std::set<std::string> seen;
  for (const auto& [name, value] : arrays) {
    if (!params.contains(name)) throw CheckpointError("checkpoint array '" + name + "' has no matching parameter");
    ag::Parameter& p = params.at(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols()) {
      throw CheckpointError("checkpoint array '" + name + "' has shape " + std::to_string(value.rows()) + "x" +
                            std::to_string(value.cols()) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                            std::to_string(p.value.cols()));
    }
    p.value = value;
    seen.insert(name);
  }
  for (const ag::Parameter* p : params.all()) {
    if (!seen.count(p->name)) throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = to_text(ckpt.config);
  header["model"] = {{"vocab_size", ckpt.model.vocab_size},       {"d_model", ckpt.model.d_model},
                     {"heads", ckpt.model.heads},                 {"encoder_layers", ckpt.model.encoder_layers},
                     {"decoder_layers", ckpt.model.decoder_layers}, {"viwordformer", ckpt.model.viwordformer},
                     {"phrasal_every_layer", ckpt.model.phrasal_every_layer}, {"seed", ckpt.model.seed}};
  header["vocab"] = std::vector<std::string>(ckpt.vocab.tokens().begin() + kNumReserved, ckpt.vocab.tokens().end());
  header["vocab_fingerprint"] = ckpt.vocab.fingerprint();
  header["epoch"] = ckpt.epoch;
  header["best"] = {{"name", ckpt.best.name}, {"value", ckpt.best.value}, {"epoch", ckpt.best.epoch}};
  header["rng_state"] = ckpt.rng_state;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, m] : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::int64_t>(out, m.rows());
    put<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = get<std::uint64_t>(in, "header size");
  std::string text(header_size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_size))) throw CheckpointError("checkpoint header truncated");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    std::istringstream cfg(header.at("config").get<std::string>());
    ckpt.config = parse_train_config(cfg);
    const auto& m = header.at("model");
    ckpt.model.vocab_size = m.at("vocab_size").get<int>();
    ckpt.model.d_model = m.at("d_model").get<int>();
    ckpt.model.heads = m.at("heads").get<int>();
    ckpt.model.encoder_layers = m.at("encoder_layers").get<int>();
    ckpt.model.decoder_layers = m.at("decoder_layers").get<int>();
    ckpt.model.viwordformer = m.at("viwordformer").get<bool>();
    ckpt.model.phrasal_every_layer = m.at("phrasal_every_layer").get<bool>();
    ckpt.model.seed = m.at("seed").get<std::uint64_t>();
    for (const auto& tok : header.at("vocab")) ckpt.vocab.add(tok.get<std::string>());
    if (ckpt.vocab.fingerprint() != header.at("vocab_fingerprint").get<std::uint64_t>()) {
      throw CheckpointError("checkpoint vocabulary fingerprint mismatch");
    }
    ckpt.epoch = header.at("epoch").get<int>();
    const auto& best = header.at("best");
    ckpt.best = {best.at("name").get<std::string>(), best.at("value").get<double>(), best.at("epoch").get<int>()};
    ckpt.rng_state = header.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }

  const auto count = get<std::uint32_t>(in, "array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_size = get<std::uint32_t>(in, "array name size");
    std::string name(name_size, '\0');
    if (!in.read(name.data(), name_size)) throw CheckpointError("checkpoint truncated in array name");
    const auto rows = get<std::int64_t>(in, name + " rows");
    const auto cols = get<std::int64_t>(in, name + " cols");
    if (rows < 0 || cols < 0) throw CheckpointError("negative shape for array " + name);
    ag::Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()))) {
      throw CheckpointError("checkpoint truncated in array " + name);
    }
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

std::unique_ptr<ViMultiChoice> instantiate(const Checkpoint& ckpt) {
  if (ckpt.model.vocab_size != ckpt.vocab.size()) throw CheckpointError("model vocab size differs from stored vocabulary");
  auto model = std::make_unique<ViMultiChoice>(ckpt.model);
  restore_parameters(model->parameters(), ckpt.arrays);
  return model;
}

}  // namespace vimc
