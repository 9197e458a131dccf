#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csmt/aligner.hpp"
#include "csmt/corpus_io.hpp"
#include "csmt/phrase_table.hpp"

namespace csmt {

struct Occurrence {
  Span src;
  Span tgt;

  friend auto operator<=>(const Occurrence&, const Occurrence&) = default;
  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

struct SingleMatch {
  std::size_t sentence = 0;
  std::vector<Occurrence> occurrences;  // all positions in that sentence
};

struct DoubleMatch {
  std::size_t sentence = 0;
  /// (occurrence of the first entry, occurrence of the second entry)
  std::vector<std::pair<Occurrence, Occurrence>> occurrences;
};

/// Sentences matching each phrase-table entry (single) and each unordered
/// combination of two distinct entries with disjoint spans (double).
struct MatchIndex {
  std::vector<PhrasePair> entries;  // entry id -> phrase pair, table order
  std::map<std::size_t, std::vector<SingleMatch>> single;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<DoubleMatch>> combos;
};

/// An occurrence is indexed only when its box is alignment-consistent.
/// Set `with_combos` to false to skip the two-entry index.
MatchIndex build_match_index(const Corpus& corpus, const PhraseTable& table,
                             const std::vector<AlignmentLinks>& alignments,
                             bool with_combos = true);

struct Replacement {
  Span span;        // in the original source sentence
  Phrase original;  // replaced source words
  Phrase inserted;  // target-language words put in their place

  friend bool operator==(const Replacement&, const Replacement&) = default;
};

struct AugmentedPair {
  Sentence source;  // code-switched
  Sentence target;
  std::vector<Replacement> replacements;

  friend bool operator==(const AugmentedPair&, const AugmentedPair&) = default;
};

/// Replaces each source span by its phrase (tagged TGT). Spans must be in
/// bounds and pairwise disjoint.
AugmentedPair apply_replacements(const SentencePair& pair,
                                 const std::vector<std::pair<Span, Phrase>>& spans);

/// Inverse of apply_replacements.
SentencePair restore_original(const AugmentedPair& aug);

struct SamplingOptions {
  std::size_t k1 = 100;
  std::size_t k2 = 30;
  std::uint64_t seed = 1;
};

/// At most k1 sentences per entry (one replacement) and k2 per combination
/// (two replacements), without replacement within each list.
std::vector<AugmentedPair> sample_augmented(const MatchIndex& index, const Corpus& corpus,
                                            const SamplingOptions& opts);

/// Original pairs (all SRC-tagged sources) followed by the augmented pairs.
Corpus build_training_set(const Corpus& original, const std::vector<AugmentedPair>& augmented);

/// `{"src":[..],"src_lang":[..],"tgt":[..],"repl":[[lo,hi,"phrase"],..],"orig":[..]}`
std::string to_jsonl(const std::vector<AugmentedPair>& pairs);
std::vector<AugmentedPair> from_jsonl(const std::string& text);

/// One code-switched source line per pair.
std::vector<std::string> code_switched_lines(const std::vector<AugmentedPair>& pairs);

}  // namespace csmt
