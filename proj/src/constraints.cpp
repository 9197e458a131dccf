#include "csmt/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csmt/augmentation.hpp"
#include "csmt/error.hpp"
#include "csmt/io.hpp"
#include "csmt/rng.hpp"
#include "json.hpp"

namespace csmt {

void ConstraintSet::add(LexiconEntry e) {
  if (e.src.empty() || e.tgt.empty()) throw Error("empty lexicon phrase");
  for (const auto& x : entries) {
    if (x.src == e.src) throw Error("duplicate constraint source: " + join(e.src));
  }
  entries.push_back(std::move(e));
}

std::vector<int> find_occurrences(const std::vector<std::string>& hay, const Phrase& needle) {
  std::vector<int> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

bool contains_phrase(const std::vector<std::string>& hay, const Phrase& needle) {
  return !find_occurrences(hay, needle).empty();
}

namespace {

bool matches_at(const Sentence& src, std::size_t pos, const Phrase& phrase) {
  if (pos + phrase.size() > src.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    const auto& t = src[pos + k];
    if (t.lang != Lang::Src || t.surface != phrase[k]) return false;
  }
  return true;
}

// Leftmost-longest matches as (span, entry index).
std::vector<std::pair<Span, std::size_t>> match_constraints(const Sentence& src,
                                                            const ConstraintSet& cs) {
  std::vector<std::pair<Span, std::size_t>> out;
  std::size_t i = 0;
  while (i < src.size()) {
    std::size_t best = cs.entries.size();
    for (std::size_t e = 0; e < cs.entries.size(); ++e) {
      const auto& p = cs.entries[e].src;
      if (matches_at(src, i, p) &&
          (best == cs.entries.size() || p.size() > cs.entries[best].src.size())) {
        best = e;
      }
    }
    if (best == cs.entries.size()) {
      ++i;
      continue;
    }
    const auto len = cs.entries[best].src.size();
    out.emplace_back(Span{static_cast<int>(i), static_cast<int>(i + len - 1)}, best);
    i += len;
  }
  return out;
}

}  // namespace

ConstrainedSource apply_constraints(const Sentence& src, const ConstraintSet& cs) {
  ConstrainedSource out;
  std::vector<bool> used(cs.entries.size(), false);
  std::size_t pos = 0;
  for (const auto& [span, e] : match_constraints(src, cs)) {
    for (; pos < static_cast<std::size_t>(span.lo); ++pos) out.source.push_back(src[pos]);
    for (const auto& w : cs.entries[e].tgt) out.source.push_back(Token{w, Lang::Tgt});
    pos = static_cast<std::size_t>(span.hi) + 1;
    out.spans.push_back(span);
    if (!used[e]) {
      used[e] = true;
      out.applied.push_back(cs.entries[e]);
    }
  }
  for (; pos < src.size(); ++pos) out.source.push_back(src[pos]);
  return out;
}

ConstraintSet sample_constraints_from_reference(const SentencePair& pair,
                                                const PhraseTable& table, std::size_t n,
                                                std::uint64_t seed) {
  if (n == 0) return {};
  const auto src_words = surfaces(pair.source);
  const auto tgt_words = surfaces(pair.target);

  struct Candidate {
    LexiconEntry entry;
    std::vector<Span> spans;
  };
  std::vector<Candidate> eligible;
  for (const auto& [src, row] : table.rows()) {
    const auto at = find_occurrences(src_words, src);
    if (at.empty()) continue;
    std::vector<Span> spans;
    for (int p : at) spans.push_back(Span{p, p + static_cast<int>(src.size()) - 1});
    for (const auto& [tgt, st] : row) {
      if (contains_phrase(tgt_words, tgt)) eligible.push_back(Candidate{{src, tgt}, spans});
    }
  }

  Rng rng(seed);
  rng.shuffle(eligible);
  ConstraintSet cs;
  std::vector<Span> taken;
  for (const auto& c : eligible) {
    if (cs.size() >= n) break;
    const bool clash = std::any_of(c.spans.begin(), c.spans.end(), [&](const Span& s) {
      return std::any_of(taken.begin(), taken.end(), [&](const Span& t) { return s.overlaps(t); });
    });
    if (clash) continue;
    taken.insert(taken.end(), c.spans.begin(), c.spans.end());
    cs.add(c.entry);
  }
  return cs;
}

// ---------------------------------------------------------------------------

std::string tag_surface(int id) { return "<tag_" + std::to_string(id) + ">"; }

int parse_tag(const std::string& s) {
  constexpr std::string_view kPrefix = "<tag_";
  if (s.size() <= kPrefix.size() + 1 || s.compare(0, kPrefix.size(), kPrefix) != 0 ||
      s.back() != '>') {
    return 0;
  }
  int id = 0;
  for (std::size_t i = kPrefix.size(); i + 1 < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return 0;
    id = id * 10 + (s[i] - '0');
  }
  return id;
}

TaggedSource tag_source(const Sentence& src, const ConstraintSet& cs) {
  TaggedSource out;
  std::size_t pos = 0;
  int next = 1;
  for (const auto& [span, e] : match_constraints(src, cs)) {
    for (; pos < static_cast<std::size_t>(span.lo); ++pos) out.source.push_back(src[pos]);
    out.source.push_back(Token{tag_surface(next), Lang::Src});
    out.tags[next++] = cs.entries[e].tgt;
    pos = static_cast<std::size_t>(span.hi) + 1;
  }
  for (; pos < src.size(); ++pos) out.source.push_back(src[pos]);
  return out;
}

UntagResult untag_output(const std::vector<std::string>& hyp, const TagMap& tags) {
  UntagResult out;
  std::vector<bool> seen;
  std::map<int, bool> present;
  for (const auto& w : hyp) {
    const int id = parse_tag(w);
    if (id == 0) {
      out.tokens.push_back(w);
      continue;
    }
    auto it = tags.find(id);
    if (it == tags.end()) throw Error("hypothesis contains unknown tag " + w);
    present[id] = true;
    out.tokens.insert(out.tokens.end(), it->second.begin(), it->second.end());
  }
  for (const auto& [id, phrase] : tags) {
    if (!present.count(id)) ++out.failures;
  }
  return out;
}

Corpus make_placeholder_training_corpus(const Corpus& corpus, const PhraseTable& table,
                                        const std::vector<AlignmentLinks>& alignments,
                                        double ratio, std::uint64_t seed) {
  Corpus out = corpus;
  if (ratio <= 0.0 || corpus.empty()) return out;
  const MatchIndex index = build_match_index(corpus, table, alignments, false);

  // sentence -> all matched occurrences
  std::map<std::size_t, std::vector<Occurrence>> by_sentence;
  for (const auto& [e, matches] : index.single) {
    for (const auto& m : matches) {
      auto& v = by_sentence[m.sentence];
      v.insert(v.end(), m.occurrences.begin(), m.occurrences.end());
    }
  }
  std::vector<std::size_t> candidates;
  for (const auto& [s, occ] : by_sentence) candidates.push_back(s);

  const auto wanted = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(corpus.size())));
  Rng rng(seed);
  for (std::size_t pick : rng.sample_indices(candidates.size(), wanted)) {
    const std::size_t s = candidates[pick];
    auto occ = by_sentence[s];
    std::sort(occ.begin(), occ.end());
    // Greedy left-to-right, longest source span first at equal start.
    std::stable_sort(occ.begin(), occ.end(), [](const Occurrence& a, const Occurrence& b) {
      if (a.src.lo != b.src.lo) return a.src.lo < b.src.lo;
      return a.src.length() > b.src.length();
    });
    std::vector<Occurrence> chosen;
    for (const auto& o : occ) {
      const bool clash = std::any_of(chosen.begin(), chosen.end(), [&](const Occurrence& c) {
        return c.src.overlaps(o.src) || c.tgt.overlaps(o.tgt);
      });
      if (!clash) chosen.push_back(o);
    }
    const auto& orig = corpus[s];
    auto rewrite = [](const Sentence& side, std::vector<std::pair<Span, int>> spans, Lang lang) {
      std::sort(spans.begin(), spans.end());
      Sentence res;
      int pos = 0;
      for (const auto& [span, id] : spans) {
        for (; pos < span.lo; ++pos) res.push_back(side[static_cast<std::size_t>(pos)]);
        res.push_back(Token{tag_surface(id), lang});
        pos = span.hi + 1;
      }
      for (; pos < static_cast<int>(side.size()); ++pos) res.push_back(side[static_cast<std::size_t>(pos)]);
      return res;
    };
    std::vector<std::pair<Span, int>> src_spans, tgt_spans;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      src_spans.emplace_back(chosen[k].src, static_cast<int>(k + 1));
      tgt_spans.emplace_back(chosen[k].tgt, static_cast<int>(k + 1));
    }
    out[s] = SentencePair{rewrite(orig.source, src_spans, Lang::Src),
                          rewrite(orig.target, tgt_spans, Lang::Tgt)};
  }
  return out;
}

std::vector<LexiconEntry> read_lexicon(const std::string& path) {
  std::vector<LexiconEntry> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("malformed lexicon line: " + line);
    LexiconEntry e{split_words(line.substr(0, tab)), split_words(line.substr(tab + 1))};
    if (e.src.empty() || e.tgt.empty()) throw Error("empty lexicon phrase: " + line);
    out.push_back(std::move(e));
  }
  return out;
}

std::string lexicon_to_tsv(const std::vector<LexiconEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += join(e.src) + "\t" + join(e.tgt) + "\n";
  return out;
}

std::string constraints_to_jsonl(const std::vector<ConstraintSet>& sets) {
  std::string out;
  for (const auto& cs : sets) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : cs.entries) j.push_back({join(e.src), join(e.tgt)});
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<ConstraintSet> constraints_from_jsonl(const std::string& text) {
  std::vector<ConstraintSet> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    ConstraintSet cs;
    if (!line.empty()) {
      for (const auto& e : nlohmann::json::parse(line)) {
        cs.add(LexiconEntry{split_words(e.at(0).get<std::string>()),
                            split_words(e.at(1).get<std::string>())});
      }
    }
    out.push_back(std::move(cs));
  }
  return out;
}

}  // namespace csmt
