#include "csmt/phrase_table.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "csmt/error.hpp"

namespace csmt {

std::set<PhraseBox> extract_consistent_boxes(const SentencePair& pair,
                                             const AlignmentLinks& links,
                                             int max_src, int max_tgt) {
  std::set<PhraseBox> out;
  const int m = static_cast<int>(pair.source.size());
  const int n = static_cast<int>(pair.target.size());
  if (links.empty() || m == 0 || n == 0) return out;

  // Per target word: range of linked source positions.
  std::vector<int> src_min(n, std::numeric_limits<int>::max());
  std::vector<int> src_max(n, -1);
  std::vector<bool> tgt_aligned(n, false);
  for (const auto& [i, j] : links) {
    if (i < 0 || i >= m || j < 0 || j >= n) throw Error("alignment link out of bounds");
    src_min[j] = std::min(src_min[j], i);
    src_max[j] = std::max(src_max[j], i);
    tgt_aligned[j] = true;
  }

  for (int s1 = 0; s1 < m; ++s1) {
    for (int s2 = s1; s2 < std::min(m, s1 + max_src); ++s2) {
      int t_lo = n, t_hi = -1;
      for (const auto& [i, j] : links) {
        if (i >= s1 && i <= s2) {
          t_lo = std::min(t_lo, j);
          t_hi = std::max(t_hi, j);
        }
      }
      if (t_hi < 0) continue;
      if (t_hi - t_lo + 1 > max_tgt) continue;
      bool consistent = true;
      for (int j = t_lo; j <= t_hi && consistent; ++j) {
        if (tgt_aligned[j] && (src_min[j] < s1 || src_max[j] > s2)) consistent = false;
      }
      if (!consistent) continue;
      // Grow over unaligned target words on either side.
      for (int t1 = t_lo; t1 >= 0; --t1) {
        if (t1 < t_lo && tgt_aligned[t1]) break;
        for (int t2 = t_hi; t2 < n; ++t2) {
          if (t2 > t_hi && tgt_aligned[t2]) break;
          if (t2 - t1 + 1 > max_tgt) break;
          out.insert(PhraseBox{Span{s1, s2}, Span{t1, t2}});
        }
      }
    }
  }
  return out;
}

Phrase phrase_of(const Sentence& s, Span span) {
  Phrase p;
  for (int k = span.lo; k <= span.hi; ++k) p.push_back(s[static_cast<std::size_t>(k)].surface);
  return p;
}

std::set<PhrasePair> extract_consistent_phrases(const SentencePair& pair,
                                                const AlignmentLinks& links,
                                                int max_src, int max_tgt) {
  std::set<PhrasePair> out;
  for (const auto& b : extract_consistent_boxes(pair, links, max_src, max_tgt)) {
    out.insert(PhrasePair{phrase_of(pair.source, b.src), phrase_of(pair.target, b.tgt)});
  }
  return out;
}

// ---------------------------------------------------------------------------

void PhraseTable::add(const Phrase& src, const Phrase& tgt, std::size_t count) {
  if (src.size() > static_cast<std::size_t>(kMaxSrcPhrase)) {
    throw Error("source phrase longer than " + std::to_string(kMaxSrcPhrase));
  }
  if (src.empty() || tgt.empty()) throw Error("empty phrase");
  rows_[src][tgt].count += count;
}

void PhraseTable::normalize() {
  for (auto& [src, row] : rows_) {
    std::size_t total = 0;
    for (const auto& [tgt, st] : row) total += st.count;
    for (auto& [tgt, st] : row) {
      st.prob = static_cast<double>(st.count) / static_cast<double>(total);
    }
  }
}

const PhraseStats* PhraseTable::find(const Phrase& src, const Phrase& tgt) const {
  auto r = rows_.find(src);
  if (r == rows_.end()) return nullptr;
  auto c = r->second.find(tgt);
  return c == r->second.end() ? nullptr : &c->second;
}

std::vector<PhrasePair> PhraseTable::pairs() const {
  std::vector<PhrasePair> out;
  for (const auto& [src, row] : rows_) {
    for (const auto& [tgt, st] : row) out.push_back(PhrasePair{src, tgt});
  }
  return out;
}

std::size_t PhraseTable::size() const {
  std::size_t n = 0;
  for (const auto& [src, row] : rows_) n += row.size();
  return n;
}

std::string PhraseTable::to_moses() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [src, row] : rows_) {
    for (const auto& [tgt, st] : row) {
      os << join(src) << " ||| " << join(tgt) << " ||| " << st.count << " ||| "
         << st.prob << '\n';
    }
  }
  return os.str();
}

PhraseTable PhraseTable::from_moses(const std::string& text) {
  PhraseTable t;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      const auto sep = line.find(" ||| ", pos);
      fields.push_back(line.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos));
      if (sep == std::string::npos) break;
      pos = sep + 5;
    }
    if (fields.size() != 4) throw Error("malformed phrase table line: " + line);
    const Phrase src = split_words(fields[0]);
    const Phrase tgt = split_words(fields[1]);
    t.add(src, tgt, std::stoull(fields[2]));
    t.rows_[src][tgt].prob = std::stod(fields[3]);
  }
  return t;
}

PhraseTable build_phrase_table(const Corpus& corpus,
                               const std::vector<AlignmentLinks>& alignments,
                               int max_src, int max_tgt) {
  if (corpus.size() != alignments.size()) {
    throw Error("build_phrase_table: " + std::to_string(corpus.size()) +
                " sentences vs " + std::to_string(alignments.size()) + " alignments");
  }
  PhraseTable table;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    for (const auto& b : extract_consistent_boxes(corpus[k], alignments[k], max_src, max_tgt)) {
      table.add(phrase_of(corpus[k].source, b.src), phrase_of(corpus[k].target, b.tgt), 1);
    }
  }
  table.normalize();
  return table;
}

PhraseTable prune_table(const PhraseTable& table, std::size_t threshold) {
  if (threshold < 1) throw Error("prune threshold must be >= 1");
  PhraseTable out;
  for (const auto& [src, row] : table.rows()) {
    for (const auto& [tgt, st] : row) {
      if (st.count >= threshold) out.add(src, tgt, st.count);
    }
  }
  out.normalize();
  return out;
}

}  // namespace csmt
