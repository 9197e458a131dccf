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

struct LexiconEntry {
  Phrase src;
  Phrase tgt;

  friend bool operator==(const LexiconEntry&, const LexiconEntry&) = default;
};

/// Pre-specified translations for one sentence; source phrases are distinct.
struct ConstraintSet {
  std::vector<LexiconEntry> entries;

  void add(LexiconEntry e);  // throws on a duplicate source phrase
  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

struct ConstrainedSource {
  Sentence source;                    // code-switched
  std::vector<LexiconEntry> applied;  // distinct entries, first-use order
  std::vector<Span> spans;            // matched spans in the input
};

/// Leftmost-longest non-overlapping replacement of SRC-tagged phrases.
ConstrainedSource apply_constraints(const Sentence& src, const ConstraintSet& cs);

/// Up to n table entries whose source occurs in pair.source and whose target
/// occurs contiguously in pair.target; no two chosen entries overlap anywhere
/// on the source side.
ConstraintSet sample_constraints_from_reference(const SentencePair& pair,
                                                const PhraseTable& table, std::size_t n,
                                                std::uint64_t seed);

/// Positions where `needle` occurs contiguously in `hay`.
std::vector<int> find_occurrences(const std::vector<std::string>& hay, const Phrase& needle);
bool contains_phrase(const std::vector<std::string>& hay, const Phrase& needle);

// ---------------------------------------------------------------------------
// Placeholder baseline

using TagMap = std::map<int, Phrase>;

std::string tag_surface(int id);
/// Tag id of `<tag_N>`, or 0 when `surface` is not a tag.
int parse_tag(const std::string& surface);

struct TaggedSource {
  Sentence source;
  TagMap tags;
};

/// Matched spans become `<tag_1>`, `<tag_2>`, ... left to right.
TaggedSource tag_source(const Sentence& src, const ConstraintSet& cs);

struct UntagResult {
  std::vector<std::string> tokens;
  std::size_t failures = 0;  // tags of the map missing from the hypothesis
};

UntagResult untag_output(const std::vector<std::string>& hyp, const TagMap& tags);

/// Tags round(ratio * |corpus|) sentences (chosen among those with an
/// alignment-consistent table match) on both sides with matching tag ids.
Corpus make_placeholder_training_corpus(const Corpus& corpus, const PhraseTable& table,
                                        const std::vector<AlignmentLinks>& alignments,
                                        double ratio, std::uint64_t seed);

/// Lexicon TSV: `src phrase \t tgt phrase`.
std::vector<LexiconEntry> read_lexicon(const std::string& path);
std::string lexicon_to_tsv(const std::vector<LexiconEntry>& entries);

/// Per-line constraint sets as JSON lines: `[["src phrase","tgt phrase"],...]`.
std::string constraints_to_jsonl(const std::vector<ConstraintSet>& sets);
std::vector<ConstraintSet> constraints_from_jsonl(const std::string& text);

}  // namespace csmt
