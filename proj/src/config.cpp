#include "vimc/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vimc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad value for '" + key + "': " + value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config: bad value for '" + key + "': " + value);
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string to_string(heads::LossMode mode) { return mode == heads::LossMode::Single ? "single" : "multitask"; }

heads::LossMode parse_loss_mode(const std::string& text) {
  if (text == "single") return heads::LossMode::Single;
  if (text == "multitask") return heads::LossMode::Multitask;
  throw std::invalid_argument("unknown mode '" + text + "' (expected single or multitask)");
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: " + field + " " + why);
  };
  if (!(c.learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (c.batch_size < 1) fail("batch_size", "must be >= 1");
  if (c.patience < 1) fail("patience", "must be >= 1");
  if (c.max_epochs < 1) fail("max_epochs", "must be >= 1");
  if (c.d_model < 1) fail("d_model", "must be >= 1");
  if (c.heads < 1 || c.d_model % c.heads != 0) fail("heads", "must divide d_model");
  if (c.encoder_layers < 1) fail("encoder_layers", "must be >= 1");
  if (c.decoder_layers < 1) fail("decoder_layers", "must be >= 1");
  if (c.retrieval_k < 1) fail("retrieval_k", "must be >= 1");
  if (c.explanation_cap < 1) fail("explanation_cap", "must be >= 1");
  if (!(c.dev_fraction > 0.0 && c.dev_fraction < 1.0)) fail("dev_fraction", "must be in (0, 1)");
  validate(c.caps);
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
  else if (key == "context_cap") c.caps.context = parse_number<int>(key, value);
  else if (key == "question_cap") c.caps.question = parse_number<int>(key, value);
  else if (key == "option_cap") c.caps.option = parse_number<int>(key, value);
  else if (key == "explanation_cap") c.explanation_cap = parse_number<int>(key, value);
  else if (key == "patience") c.patience = parse_number<int>(key, value);
  else if (key == "max_epochs") c.max_epochs = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "mode") c.mode = parse_loss_mode(value);
  else if (key == "viwordformer") c.viwordformer = parse_bool(key, value);
  else if (key == "phrasal_every_layer") c.phrasal_every_layer = parse_bool(key, value);
  else if (key == "d_model") c.d_model = parse_number<int>(key, value);
  else if (key == "encoder_layers") c.encoder_layers = parse_number<int>(key, value);
  else if (key == "heads") c.heads = parse_number<int>(key, value);
  else if (key == "decoder_layers") c.decoder_layers = parse_number<int>(key, value);
  else if (key == "retrieval_k") c.retrieval_k = parse_number<int>(key, value);
  else if (key == "retrieval_mode") c.retrieval_mode = retrieval::parse_mode(value);
  else if (key == "dev_fraction") c.dev_fraction = parse_number<double>(key, value);
  else if (key == "adam_beta1") c.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") c.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_epsilon") c.adam_epsilon = parse_number<double>(key, value);
  else if (key == "train_path") c.train_path = value;
  else if (key == "dev_path") c.dev_path = value;
  else if (key == "corpus_path") c.corpus_path = value;
  else if (key == "checkpoint_path") c.checkpoint_path = value;
  else if (key == "log_path") c.log_path = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig parse_train_config(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return parse_train_config(in);
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "learning_rate = " << shortest(c.learning_rate) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "context_cap = " << c.caps.context << '\n'
     << "question_cap = " << c.caps.question << '\n'
     << "option_cap = " << c.caps.option << '\n'
     << "explanation_cap = " << c.explanation_cap << '\n'
     << "patience = " << c.patience << '\n'
     << "max_epochs = " << c.max_epochs << '\n'
     << "seed = " << c.seed << '\n'
     << "mode = " << to_string(c.mode) << '\n'
     << "viwordformer = " << (c.viwordformer ? "on" : "off") << '\n'
     << "phrasal_every_layer = " << (c.phrasal_every_layer ? "on" : "off") << '\n'
     << "d_model = " << c.d_model << '\n'
     << "encoder_layers = " << c.encoder_layers << '\n'
     << "heads = " << c.heads << '\n'
     << "decoder_layers = " << c.decoder_layers << '\n'
     << "retrieval_k = " << c.retrieval_k << '\n'
     << "retrieval_mode = " << retrieval::to_string(c.retrieval_mode) << '\n'
     << "dev_fraction = " << shortest(c.dev_fraction) << '\n'
     << "adam_beta1 = " << shortest(c.adam_beta1) << '\n'
     << "adam_beta2 = " << shortest(c.adam_beta2) << '\n'
     << "adam_epsilon = " << shortest(c.adam_epsilon) << '\n';
  auto path = [&](const char* key, const std::string& v) {
    if (!v.empty()) os << key << " = " << v << '\n';
  };
  path("train_path", c.train_path);
  path("dev_path", c.dev_path);
  path("corpus_path", c.corpus_path);
  path("checkpoint_path", c.checkpoint_path);
  path("log_path", c.log_path);
  return os.str();
}

}  // namespace vimc
