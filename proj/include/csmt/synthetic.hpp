#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "csmt/constraints.hpp"
#include "csmt/corpus_io.hpp"

namespace csmt {

/// Toy language pair: source symbol s_i translates to one target symbol
/// (a seeded bijection), and a "modifier" symbol swaps with the
/// non-modifier that follows it.
struct SyntheticConfig {
  std::size_t train_size = 2000;
  std::size_t test_size = 200;
  std::size_t vocab_size = 50;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  double modifier_fraction = 0.2;
  bool identity = false;  // target == source, no reordering
};

struct SyntheticTask {
  Corpus train;
  Corpus test;
  std::vector<LexiconEntry> lexicon;  // every s_i -> t_i
};

SyntheticTask make_synthetic_task(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace csmt
