#pragma once

// Synthetic multiple-choice items with attached contexts. The gold option
// is a span copied from the context; distractors share no token with it.

#include <cstdint>
#include <string>
#include <vector>

#include "vimc/data.hpp"

namespace vimc::synth {

struct SynthConfig {
  int context_tokens = 16;
  int option_tokens = 3;
};

/// Deterministic pseudo-syllable word list of the requested size. Words
/// never collide with the template words used in questions/explanations.
std::vector<std::string> lexicon(int size);

/// Items with uniformly drawn answer positions. The explanation follows the
/// template "answer <letter> because <overlapping tokens>".
std::vector<McqItem> synth_generate(int n, std::uint64_t seed, int vocab_size = 200, const SynthConfig& config = {});

/// Count of option tokens that also occur in the context.
int context_overlap(const McqItem& item, int option);

}  // namespace vimc::synth
