#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "csmt/aligner.hpp"
#include "csmt/corpus_io.hpp"

namespace csmt {

using Phrase = std::vector<std::string>;

struct PhrasePair {
  Phrase src;
  Phrase tgt;

  friend auto operator<=>(const PhrasePair&, const PhrasePair&) = default;
  friend bool operator==(const PhrasePair&, const PhrasePair&) = default;
};

/// Inclusive token span [lo, hi].
struct Span {
  int lo = 0;
  int hi = 0;

  int length() const { return hi - lo + 1; }
  bool overlaps(const Span& o) const { return lo <= o.hi && o.lo <= hi; }
  friend auto operator<=>(const Span&, const Span&) = default;
  friend bool operator==(const Span&, const Span&) = default;
};

struct PhraseBox {
  Span src;
  Span tgt;

  friend auto operator<=>(const PhraseBox&, const PhraseBox&) = default;
  friend bool operator==(const PhraseBox&, const PhraseBox&) = default;
};

inline constexpr int kMaxSrcPhrase = 3;

/// All alignment-consistent boxes within the length caps: at least one link
/// inside, no link with exactly one end inside.
std::set<PhraseBox> extract_consistent_boxes(const SentencePair& pair,
                                             const AlignmentLinks& links,
                                             int max_src = kMaxSrcPhrase,
                                             int max_tgt = 5);

std::set<PhrasePair> extract_consistent_phrases(const SentencePair& pair,
                                                const AlignmentLinks& links,
                                                int max_src = kMaxSrcPhrase,
                                                int max_tgt = 5);

Phrase phrase_of(const Sentence& s, Span span);

struct PhraseStats {
  std::size_t count = 0;
  double prob = 0.0;  // p(tgt | src)

  friend bool operator==(const PhraseStats&, const PhraseStats&) = default;
};

class PhraseTable {
 public:
  using Row = std::map<Phrase, PhraseStats>;

  void add(const Phrase& src, const Phrase& tgt, std::size_t count);
  /// Recomputes p(tgt|src) = count / row total.
  void normalize();

  const std::map<Phrase, Row>& rows() const { return rows_; }
  const PhraseStats* find(const Phrase& src, const Phrase& tgt) const;
  std::vector<PhrasePair> pairs() const;
  std::size_t size() const;
  bool empty() const { return rows_.empty(); }

  /// `src ||| tgt ||| count ||| prob`, one entry per line.
  std::string to_moses() const;
  static PhraseTable from_moses(const std::string& text);

  friend bool operator==(const PhraseTable&, const PhraseTable&) = default;

 private:
  std::map<Phrase, Row> rows_;
};

PhraseTable build_phrase_table(const Corpus& corpus,
                               const std::vector<AlignmentLinks>& alignments,
                               int max_src = kMaxSrcPhrase, int max_tgt = 5);

/// Drops entries with joint count < threshold, then renormalizes each row.
PhraseTable prune_table(const PhraseTable& table, std::size_t threshold = 10);

}  // namespace csmt
