#include "vimc/synth.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "vimc/random.hpp"

namespace vimc::synth {

namespace {

const std::set<std::string>& template_words() {
  static const std::set<std::string> words = {"which", "option", "appears", "in", "the", "passage", "about",
                                              "answer", "because", "a", "b", "c", "d"};
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

std::vector<std::string> lexicon(int size) {
  static const char* onsets[] = {"b", "c", "d", "g", "h", "k", "l", "m", "n", "ph", "qu", "r", "s", "t", "th", "tr", "v", "x"};
  static const char* rimes[] = {"a", "an", "ang", "anh", "ao", "at", "em", "en", "i", "inh", "o", "oa", "oi", "ong", "u", "ung", "uy", "ương"};
  std::vector<std::string> words;
  for (const char* r : rimes) {
    for (const char* o : onsets) {
      std::string w = std::string(o) + r;
      if (!template_words().count(w)) words.push_back(w);
    }
  }
  if (size < 1 || static_cast<std::size_t>(size) > words.size()) {
    throw std::invalid_argument("lexicon size must be in [1, " + std::to_string(words.size()) + "]");
  }
  words.resize(static_cast<std::size_t>(size));
  return words;
}

int context_overlap(const McqItem& item, int option) {
  const auto& tok = default_tokenizer();
  const auto ctx = tok.split(item.context.value_or(""));
  const std::set<std::string> ctx_set(ctx.begin(), ctx.end());
  int n = 0;
  for (const auto& w : tok.split(item.options[static_cast<std::size_t>(option)])) n += ctx_set.count(w) ? 1 : 0;
  return n;
}

std::vector<McqItem> synth_generate(int n, std::uint64_t seed, int vocab_size, const SynthConfig& config) {
  if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
  const int needed = config.context_tokens + 3 * config.option_tokens + 1;
  if (vocab_size < needed) throw std::invalid_argument("synth: vocab size too small for the item shape");
  const auto words = lexicon(vocab_size);
  Rng rng(seed);
  std::vector<McqItem> items;
  items.reserve(static_cast<std::size_t>(n));
  const int width = std::max(6, static_cast<int>(std::to_string(n).size()));
  for (int i = 0; i < n; ++i) {
    std::vector<int> pool(words.size());
    for (std::size_t w = 0; w < pool.size(); ++w) pool[w] = static_cast<int>(w);
    rng.shuffle(pool);
    auto take = [&](std::size_t& cursor, int count) {
      std::vector<std::string> out;
      for (int j = 0; j < count; ++j) out.push_back(words[static_cast<std::size_t>(pool[cursor++])]);
      return out;
    };
    std::size_t cursor = 0;
    const auto context = take(cursor, config.context_tokens);
    const auto start = static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(config.context_tokens - config.option_tokens + 1)));
    const std::vector<std::string> gold(context.begin() + static_cast<std::ptrdiff_t>(start),
                                        context.begin() + static_cast<std::ptrdiff_t>(start) + config.option_tokens);

    McqItem item;
    std::string id = std::to_string(i);
    item.id = "syn-" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    item.subject = kAllSubjects[rng.bounded(kAllSubjects.size())];
    item.grade = 10 + static_cast<int>(rng.bounded(3));
    item.answer = static_cast<int>(rng.bounded(kNumOptions));
    for (int k = 0; k < kNumOptions; ++k) {
      item.options[static_cast<std::size_t>(k)] = k == item.answer ? join(gold) : join(take(cursor, config.option_tokens));
    }
    item.question = "which option appears in the passage about " + take(cursor, 1)[0] + " ?";
    item.context = join(context);
    const char letter = static_cast<char>('a' + item.answer);
    item.explanation = "answer " + std::string(1, letter) + " because " + join(gold);
    validate(item);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace vimc::synth
