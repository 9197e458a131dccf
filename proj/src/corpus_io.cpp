#include "csmt/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "csmt/error.hpp"
#include "csmt/io.hpp"

namespace csmt {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

}  // namespace

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Sentence tokenize(std::string_view line, Lang lang) {
  Sentence out;
  for (auto& w : split_words(line)) out.push_back(Token{std::move(w), lang});
  return out;
}

std::vector<std::string> surfaces(const Sentence& s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(t.surface);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string join(const Sentence& s) { return join(surfaces(s)); }

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (auto s : kSpecialSurfaces) add(std::string(s));
}

void Vocabulary::add(std::string surface) {
  const int id = static_cast<int>(surfaces_.size());
  ids_.emplace(surface, id);
  surfaces_.push_back(std::move(surface));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t max_size) {
  if (max_size < kNumSpecials) throw Error("vocabulary max_size must be >= 4");
  std::map<std::string, std::size_t> counts;
  for (const auto& sent : corpus) {
    for (const auto& w : sent) ++counts[w];
  }
  for (auto s : kSpecialSurfaces) counts.erase(std::string(s));

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  // std::map iteration is already lexicographic; stable sort keeps it for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecials);
  for (std::size_t i = 0; i < keep; ++i) v.add(ranked[i].first);
  return v;
}

int Vocabulary::id_of(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view surface) const {
  return ids_.count(std::string(surface)) > 0;
}

const std::string& Vocabulary::surface_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size()) {
    return surfaces_[kUnk];
  }
  return surfaces_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(std::ostream& os) const {
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    os << surfaces_[i] << '\t' << i << '\n';
  }
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream ss;
  save(ss);
  write_file_atomic(path, ss.str());
}

Vocabulary Vocabulary::load(std::istream& is) {
  Vocabulary v;
  v.surfaces_.clear();
  v.ids_.clear();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("malformed vocabulary line: " + line);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.surfaces_.size())) {
      throw Error("vocabulary ids must be dense and ordered");
    }
    v.add(line.substr(0, tab));
  }
  if (v.surfaces_.size() < kNumSpecials) throw Error("vocabulary lacks specials");
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.surfaces_[i] != kSpecialSurfaces[i]) {
      throw Error("vocabulary specials out of place");
    }
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return load(in);
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string content;
  for (const auto& l : lines) {
    content += l;
    content.push_back('\n');
  }
  write_file_atomic(path, content);
}

Corpus read_parallel(const std::string& src_path, const std::string& tgt_path,
                     std::size_t max_len, ReadStats* stats) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw Error("line count mismatch " + std::to_string(src.size()) + " vs " +
                std::to_string(tgt.size()));
  }
  Corpus out;
  ReadStats st;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ++st.read;
    SentencePair p{tokenize(src[i], Lang::Src), tokenize(tgt[i], Lang::Tgt)};
    if (p.source.empty() || p.target.empty() || p.source.size() > max_len ||
        p.target.size() > max_len) {
      ++st.dropped;
      continue;
    }
    out.push_back(std::move(p));
  }
  if (stats) *stats = st;
  return out;
}

// ---------------------------------------------------------------------------
// Numericalization

EncodedSentence encode(const Sentence& tokens, const Vocabulary& vocab_src,
                       const Vocabulary& vocab_tgt) {
  EncodedSentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto& v = t.lang == Lang::Src ? vocab_src : vocab_tgt;
    out.push_back(EncodedToken{v.id_of(t.surface), t.lang});
  }
  return out;
}

Sentence decode(const EncodedSentence& ids, const Vocabulary& vocab_src,
                const Vocabulary& vocab_tgt) {
  Sentence out;
  out.reserve(ids.size());
  for (const auto& e : ids) {
    const auto& v = e.lang == Lang::Src ? vocab_src : vocab_tgt;
    out.push_back(Token{v.surface_of(e.id), e.lang});
  }
  return out;
}

}  // namespace csmt
