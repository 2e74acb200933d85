#pragma once

// Multiple-choice items: schema, line-delimited JSON ingestion, validation,
// option de-biasing, tokenization and field truncation.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vimc {

inline constexpr int kNumOptions = 4;

enum class Subject { Literature, History, Geography, CivicEducation };

inline constexpr std::array<Subject, 4> kAllSubjects = {Subject::Literature, Subject::History, Subject::Geography,
                                                        Subject::CivicEducation};

std::string_view to_string(Subject s);
Subject parse_subject(std::string_view text);

/// Raised for malformed input records. `line` is 1-based, 0 when unknown.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& item_id, std::size_t line, const std::string& reason);
  const std::string& item_id() const { return item_id_; }
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string item_id_;
  std::size_t line_;
  std::string reason_;
};

struct McqItem {
  std::string id;
  Subject subject = Subject::Literature;
  int grade = 10;
  std::string question;
  std::array<std::string, kNumOptions> options;
  int answer = 0;
  std::optional<std::string> explanation;
  std::optional<std::string> context;

  bool operator==(const McqItem&) const = default;
};

/// Throws DataError when an invariant of McqItem does not hold.
void validate(const McqItem& item, std::size_t line = 0);

/// Reads one JSON object per line. Blank lines are skipped. Answers are
/// accepted as 0-3 or "A"-"D". Every record is validated and ids must be
/// unique within the file.
std::vector<McqItem> load_dataset(const std::string& path);
std::vector<McqItem> parse_dataset(std::istream& in);
void write_dataset(const std::string& path, const std::vector<McqItem>& items);
void write_dataset(std::ostream& out, const std::vector<McqItem>& items);
std::string to_json_line(const McqItem& item);

// ---------------------------------------------------------------- shuffle

/// new_options[i] = old_options[perm[i]].
using OptionPermutation = std::array<int, kNumOptions>;

struct ShuffledItem {
  McqItem item;
  OptionPermutation permutation;
};

McqItem apply_permutation(const McqItem& item, const OptionPermutation& perm);
OptionPermutation invert(const OptionPermutation& perm);

/// Permutes each item's options with a seed-derived uniformly random
/// permutation and remaps the answer so the gold text is unchanged.
std::vector<ShuffledItem> debias_shuffle(const std::vector<McqItem>& items, std::uint64_t seed);

std::array<std::size_t, kNumOptions> option_distribution(const std::vector<McqItem>& items);

// ------------------------------------------------------------ vocabulary

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

class Vocabulary {
 public:
  Vocabulary();

  int add(const std::string& token);
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the ordered token list.
  std::uint64_t fingerprint() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> surface;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

/// Splits text into normalized surface tokens.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(std::string_view text) const = 0;
};

/// Lowercases ASCII, splits on whitespace and emits each punctuation
/// character as its own token. Non-ASCII bytes are kept inside words.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, const Tokenizer& tok = default_tokenizer());
std::string detokenize(const TokenSequence& seq);
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

/// Builds a vocabulary from every text field of the items.
Vocabulary build_vocabulary(const std::vector<McqItem>& items, const Tokenizer& tok = default_tokenizer());

// ------------------------------------------------------------ truncation

struct TruncationCaps {
  int context = 400;
  int question = 80;
  int option = 20;

  bool operator==(const TruncationCaps&) const = default;
};

void validate(const TruncationCaps& caps);

struct TokenizedItem {
  std::string id;
  Subject subject = Subject::Literature;
  int grade = 10;
  TokenSequence question;
  std::array<TokenSequence, kNumOptions> options;
  TokenSequence context;
  std::optional<TokenSequence> explanation;
  int answer = 0;

  bool operator==(const TokenizedItem&) const = default;
};

TokenSequence truncate(const TokenSequence& seq, int cap);
/// Keeps prefixes of context, question and each option.
TokenizedItem truncate_item(const TokenizedItem& item, const TruncationCaps& caps);

TokenizedItem tokenize_item(const McqItem& item, const Vocabulary& vocab, const Tokenizer& tok = default_tokenizer());

}  // namespace vimc
