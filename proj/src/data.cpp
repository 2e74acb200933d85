#include "vimc/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "vimc/random.hpp"

namespace vimc {

using nlohmann::json;

std::string_view to_string(Subject s) {
  switch (s) {
    case Subject::Literature:
      return "Literature";
    case Subject::History:
      return "History";
    case Subject::Geography:
      return "Geography";
    case Subject::CivicEducation:
      return "CivicEducation";
  }
  return "?";
}

Subject parse_subject(std::string_view text) {
  for (Subject s : kAllSubjects) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown subject: " + std::string(text));
}

DataError::DataError(const std::string& item_id, std::size_t line, const std::string& reason)
    : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) + "item '" + item_id +
                         "': " + reason),
      item_id_(item_id),
      line_(line),
      reason_(reason) {}

void validate(const McqItem& item, std::size_t line) {
  if (item.id.empty()) throw DataError(item.id, line, "empty id");
  if (item.grade < 10 || item.grade > 12) throw DataError(item.id, line, "grade out of range");
  for (const auto& opt : item.options) {
    if (opt.empty()) throw DataError(item.id, line, "empty option");
  }
  if (item.answer < 0 || item.answer >= kNumOptions) throw DataError(item.id, line, "answer out of range");
}

namespace {

int parse_answer(const json& j, const std::string& id, std::size_t line) {
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0 || v >= kNumOptions) throw DataError(id, line, "answer out of range");
    return static_cast<int>(v);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s.size() == 1) {
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      if (c >= 'A' && c <= 'D') return c - 'A';
      if (c >= '0' && c <= '3') return c - '0';
    }
    throw DataError(id, line, "answer out of range");
  }
  throw DataError(id, line, "answer must be an integer 0-3 or a letter A-D");
}

McqItem parse_record(const std::string& text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError("", line, std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw DataError("", line, "record is not an object");
  McqItem item;
  auto field = [&](const char* name) -> const json& {
    auto it = j.find(name);
    if (it == j.end()) throw DataError(item.id, line, std::string("missing field '") + name + "'");
    return *it;
  };
  try {
    item.id = field("id").is_string() ? field("id").get<std::string>() : field("id").dump();
    item.subject = parse_subject(field("subject").get<std::string>());
    const json& grade = field("grade");
    item.grade = grade.is_string() ? std::stoi(grade.get<std::string>()) : grade.get<int>();
    item.question = field("question").get<std::string>();
    const json& opts = field("options");
    if (!opts.is_array() || opts.size() != kNumOptions) {
      throw DataError(item.id, line,
                      "expected 4 options, got " + std::to_string(opts.is_array() ? opts.size() : 0));
    }
    for (int k = 0; k < kNumOptions; ++k) item.options[static_cast<std::size_t>(k)] = opts[k].get<std::string>();
    item.answer = parse_answer(field("answer"), item.id, line);
    if (auto it = j.find("explanation"); it != j.end() && !it->is_null()) item.explanation = it->get<std::string>();
    if (auto it = j.find("context"); it != j.end() && !it->is_null()) item.context = it->get<std::string>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(item.id, line, std::string("schema violation: ") + e.what());
  }
  validate(item, line);
  return item;
}

}  // namespace

std::vector<McqItem> parse_dataset(std::istream& in) {
  std::vector<McqItem> items;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    McqItem item = parse_record(text, line);
    if (!seen.insert(item.id).second) throw DataError(item.id, line, "duplicate id");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<McqItem> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  return parse_dataset(in);
}

std::string to_json_line(const McqItem& item) {
  json j;
  j["id"] = item.id;
  j["subject"] = std::string(to_string(item.subject));
  j["grade"] = item.grade;
  j["question"] = item.question;
  j["options"] = item.options;
  j["answer"] = item.answer;
  if (item.explanation) j["explanation"] = *item.explanation;
  if (item.context) j["context"] = *item.context;
  return j.dump();
}

void write_dataset(std::ostream& out, const std::vector<McqItem>& items) {
  for (const auto& item : items) out << to_json_line(item) << '\n';
}

void write_dataset(const std::string& path, const std::vector<McqItem>& items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  write_dataset(out, items);
}

// ---------------------------------------------------------------- shuffle

McqItem apply_permutation(const McqItem& item, const OptionPermutation& perm) {
  McqItem out = item;
  for (int i = 0; i < kNumOptions; ++i) {
    out.options[static_cast<std::size_t>(i)] = item.options[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    if (perm[static_cast<std::size_t>(i)] == item.answer) out.answer = i;
  }
  return out;
}

OptionPermutation invert(const OptionPermutation& perm) {
  OptionPermutation inv{};
  for (int i = 0; i < kNumOptions; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  return inv;
}

std::vector<ShuffledItem> debias_shuffle(const std::vector<McqItem>& items, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ShuffledItem> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    validate(item);
    OptionPermutation perm{0, 1, 2, 3};
    rng.shuffle(perm);
    out.push_back({apply_permutation(item, perm), perm});
  }
  return out;
}

std::array<std::size_t, kNumOptions> option_distribution(const std::vector<McqItem>& items) {
  std::array<std::size_t, kNumOptions> counts{};
  for (const auto& item : items) ++counts[static_cast<std::size_t>(item.answer)];
  return counts;
}

// ------------------------------------------------------------ vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xffU;
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.add(line);
  }
  return v;
}

// ------------------------------------------------------------ tokenizing

std::vector<std::string> WhitespacePunctTokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

const Tokenizer& default_tokenizer() {
  static const WhitespacePunctTokenizer tok;
  return tok;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, const Tokenizer& tok) {
  TokenSequence seq;
  seq.surface = tok.split(text);
  seq.ids.reserve(seq.surface.size());
  for (const auto& s : seq.surface) seq.ids.push_back(vocab.id(s));
  return seq;
}

std::string detokenize(const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.surface.size(); ++i) {
    if (i) out += ' ';
    out += seq.surface[i];
  }
  return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<McqItem>& items, const Tokenizer& tok) {
  Vocabulary v;
  auto absorb = [&](std::string_view text) {
    for (const auto& s : tok.split(text)) v.add(s);
  };
  for (const auto& item : items) {
    absorb(item.question);
    for (const auto& o : item.options) absorb(o);
    if (item.context) absorb(*item.context);
    if (item.explanation) absorb(*item.explanation);
  }
  return v;
}

// ------------------------------------------------------------ truncation

void validate(const TruncationCaps& caps) {
  if (caps.context < 1 || caps.question < 1 || caps.option < 1) {
    throw std::invalid_argument("truncation caps must be positive");
  }
}

TokenSequence truncate(const TokenSequence& seq, int cap) {
  if (cap < 0) throw std::invalid_argument("negative truncation cap");
  if (seq.size() <= static_cast<std::size_t>(cap)) return seq;
  TokenSequence out;
  out.ids.assign(seq.ids.begin(), seq.ids.begin() + cap);
  out.surface.assign(seq.surface.begin(), seq.surface.begin() + cap);
  return out;
}

TokenizedItem truncate_item(const TokenizedItem& item, const TruncationCaps& caps) {
  validate(caps);
  TokenizedItem out = item;
  out.context = truncate(item.context, caps.context);
  out.question = truncate(item.question, caps.question);
  for (std::size_t k = 0; k < out.options.size(); ++k) out.options[k] = truncate(item.options[k], caps.option);
  return out;
}

TokenizedItem tokenize_item(const McqItem& item, const Vocabulary& vocab, const Tokenizer& tok) {
  TokenizedItem out;
  out.id = item.id;
  out.subject = item.subject;
  out.grade = item.grade;
  out.answer = item.answer;
  out.question = tokenize(item.question, vocab, tok);
  for (std::size_t k = 0; k < out.options.size(); ++k) out.options[k] = tokenize(item.options[k], vocab, tok);
  if (item.context) out.context = tokenize(*item.context, vocab, tok);
  if (item.explanation) out.explanation = tokenize(*item.explanation, vocab, tok);
  return out;
}

}  // namespace vimc
