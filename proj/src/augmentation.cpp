#include "csmt/augmentation.hpp"

#include <algorithm>
#include "json.hpp"
#include <sstream>

#include "csmt/error.hpp"
#include "csmt/rng.hpp"

namespace csmt {

MatchIndex build_match_index(const Corpus& corpus, const PhraseTable& table,
                             const std::vector<AlignmentLinks>& alignments,
                             bool with_combos) {
  if (corpus.size() != alignments.size()) {
    throw Error("build_match_index: corpus and alignments differ in length");
  }
  MatchIndex index;
  index.entries = table.pairs();
  std::map<PhrasePair, std::size_t> id_of;
  int max_src = 1, max_tgt = 1;
  for (std::size_t e = 0; e < index.entries.size(); ++e) {
    id_of.emplace(index.entries[e], e);
    max_src = std::max(max_src, static_cast<int>(index.entries[e].src.size()));
    max_tgt = std::max(max_tgt, static_cast<int>(index.entries[e].tgt.size()));
  }

  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& pair = corpus[k];
    // entry id -> occurrences in this sentence
    std::map<std::size_t, std::vector<Occurrence>> found;
    for (const auto& box : extract_consistent_boxes(pair, alignments[k], max_src, max_tgt)) {
      PhrasePair pp{phrase_of(pair.source, box.src), phrase_of(pair.target, box.tgt)};
      auto it = id_of.find(pp);
      if (it != id_of.end()) found[it->second].push_back(Occurrence{box.src, box.tgt});
    }
    for (auto& [e, occ] : found) index.single[e].push_back(SingleMatch{k, occ});
    if (!with_combos) continue;
    for (auto a = found.begin(); a != found.end(); ++a) {
      for (auto b = std::next(a); b != found.end(); ++b) {
        DoubleMatch dm{k, {}};
        for (const auto& oa : a->second) {
          for (const auto& ob : b->second) {
            if (!oa.src.overlaps(ob.src) && !oa.tgt.overlaps(ob.tgt)) {
              dm.occurrences.emplace_back(oa, ob);
            }
          }
        }
        if (!dm.occurrences.empty()) {
          index.combos[{a->first, b->first}].push_back(std::move(dm));
        }
      }
    }
  }
  return index;
}

AugmentedPair apply_replacements(const SentencePair& pair,
                                 const std::vector<std::pair<Span, Phrase>>& spans) {
  auto sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const int m = static_cast<int>(pair.source.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Span& s = sorted[i].first;
    if (s.lo < 0 || s.hi >= m || s.lo > s.hi) {
      throw Error("replacement span [" + std::to_string(s.lo) + "," +
                  std::to_string(s.hi) + "] out of bounds");
    }
    if (sorted[i].second.empty()) throw Error("empty replacement phrase");
    if (i > 0 && sorted[i - 1].first.overlaps(s)) throw Error("overlapping replacement spans");
  }

  AugmentedPair out;
  out.target = pair.target;
  int pos = 0;
  for (const auto& [span, phrase] : sorted) {
    for (; pos < span.lo; ++pos) out.source.push_back(pair.source[static_cast<std::size_t>(pos)]);
    for (const auto& w : phrase) out.source.push_back(Token{w, Lang::Tgt});
    out.replacements.push_back(Replacement{span, phrase_of(pair.source, span), phrase});
    pos = span.hi + 1;
  }
  for (; pos < m; ++pos) out.source.push_back(pair.source[static_cast<std::size_t>(pos)]);
  return out;
}

SentencePair restore_original(const AugmentedPair& aug) {
  SentencePair out;
  out.target = aug.target;
  std::size_t r = 0;
  for (std::size_t i = 0; i < aug.source.size();) {
    if (aug.source[i].lang == Lang::Tgt) {
      if (r >= aug.replacements.size()) throw Error("TGT token outside any replacement");
      const auto& rep = aug.replacements[r++];
      for (const auto& w : rep.original) out.source.push_back(Token{w, Lang::Src});
      i += rep.inserted.size();
    } else {
      out.source.push_back(aug.source[i++]);
    }
  }
  return out;
}

std::vector<AugmentedPair> sample_augmented(const MatchIndex& index, const Corpus& corpus,
                                            const SamplingOptions& opts) {
  Rng rng(opts.seed);
  std::vector<AugmentedPair> out;
  for (const auto& [e, matches] : index.single) {
    const auto& entry = index.entries[e];
    for (std::size_t pick : rng.sample_indices(matches.size(), opts.k1)) {
      const auto& m = matches[pick];
      const auto& occ = m.occurrences[rng.below(m.occurrences.size())];
      out.push_back(apply_replacements(corpus[m.sentence], {{occ.src, entry.tgt}}));
    }
  }
  for (const auto& [key, matches] : index.combos) {
    const auto& ea = index.entries[key.first];
    const auto& eb = index.entries[key.second];
    for (std::size_t pick : rng.sample_indices(matches.size(), opts.k2)) {
      const auto& m = matches[pick];
      const auto& [oa, ob] = m.occurrences[rng.below(m.occurrences.size())];
      out.push_back(apply_replacements(corpus[m.sentence], {{oa.src, ea.tgt}, {ob.src, eb.tgt}}));
    }
  }
  return out;
}

Corpus build_training_set(const Corpus& original, const std::vector<AugmentedPair>& augmented) {
  Corpus out;
  out.reserve(original.size() + augmented.size());
  for (auto p : original) {
    for (auto& t : p.source) t.lang = Lang::Src;
    for (auto& t : p.target) t.lang = Lang::Tgt;
    out.push_back(std::move(p));
  }
  for (const auto& a : augmented) out.push_back(SentencePair{a.source, a.target});
  return out;
}

std::string to_jsonl(const std::vector<AugmentedPair>& pairs) {
  std::string out;
  for (const auto& a : pairs) {
    nlohmann::json j;
    j["src"] = surfaces(a.source);
    std::vector<std::string> langs;
    for (const auto& t : a.source) langs.push_back(t.lang == Lang::Src ? "S" : "T");
    j["src_lang"] = langs;
    j["tgt"] = surfaces(a.target);
    nlohmann::json repl = nlohmann::json::array();
    nlohmann::json orig = nlohmann::json::array();
    for (const auto& r : a.replacements) {
      repl.push_back({r.span.lo, r.span.hi, join(r.inserted)});
      orig.push_back(join(r.original));
    }
    j["repl"] = repl;
    j["orig"] = orig;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<AugmentedPair> from_jsonl(const std::string& text) {
  std::vector<AugmentedPair> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    AugmentedPair a;
    const auto src = j.at("src").get<std::vector<std::string>>();
    const auto langs = j.at("src_lang").get<std::vector<std::string>>();
    if (src.size() != langs.size()) throw Error("src/src_lang length mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
      a.source.push_back(Token{src[i], langs[i] == "T" ? Lang::Tgt : Lang::Src});
    }
    for (const auto& w : j.at("tgt").get<std::vector<std::string>>()) {
      a.target.push_back(Token{w, Lang::Tgt});
    }
    const auto& repl = j.at("repl");
    for (std::size_t r = 0; r < repl.size(); ++r) {
      Replacement rep;
      rep.span = Span{repl[r][0].get<int>(), repl[r][1].get<int>()};
      rep.inserted = split_words(repl[r][2].get<std::string>());
      if (j.contains("orig")) rep.original = split_words(j["orig"][r].get<std::string>());
      a.replacements.push_back(std::move(rep));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<std::string> code_switched_lines(const std::vector<AugmentedPair>& pairs) {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& a : pairs) out.push_back(join(a.source));
  return out;
}

}  // namespace csmt
