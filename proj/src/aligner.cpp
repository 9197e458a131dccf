#include "csmt/aligner.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "csmt/error.hpp"

namespace csmt {

double TranslationTable::prob(const std::string& src, const std::string& tgt) const {
  auto r = rows_.find(src);
  if (r == rows_.end()) return 0.0;
  auto c = r->second.find(tgt);
  return c == r->second.end() ? 0.0 : c->second;
}

std::string TranslationTable::to_tsv() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [src, row] : rows_) {
    for (const auto& [tgt, p] : row) os << src << '\t' << tgt << '\t' << p << '\n';
  }
  return os.str();
}

TranslationTable TranslationTable::from_tsv(const std::string& text) {
  TranslationTable t;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = line.find('\t', a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw Error("malformed translation table line: " + line);
    }
    t.set(line.substr(0, a), line.substr(a + 1, b - a - 1), std::stod(line.substr(b + 1)));
  }
  return t;
}

namespace {

struct Interned {
  std::vector<std::vector<int>> src, tgt;
  std::vector<std::string> src_words, tgt_words;
};

Interned intern(const Corpus& corpus) {
  Interned out;
  std::unordered_map<std::string, int> s_ids, t_ids;
  auto id = [](std::unordered_map<std::string, int>& m, std::vector<std::string>& words,
               const std::string& w) {
    auto [it, inserted] = m.emplace(w, static_cast<int>(words.size()));
    if (inserted) words.push_back(w);
    return it->second;
  };
  for (const auto& p : corpus) {
    std::vector<int> s, t;
    for (const auto& tok : p.source) s.push_back(id(s_ids, out.src_words, tok.surface));
    for (const auto& tok : p.target) t.push_back(id(t_ids, out.tgt_words, tok.surface));
    out.src.push_back(std::move(s));
    out.tgt.push_back(std::move(t));
  }
  return out;
}

// Sparse rows keyed by target id; one map per source id.
using SparseTable = std::vector<std::unordered_map<int, double>>;

}  // namespace

TranslationTable train_ibm1(const Corpus& corpus, int iterations,
                            std::vector<double>* log_likelihood) {
  if (corpus.empty()) throw Error("train_ibm1: empty corpus");
  if (iterations < 1) throw Error("train_ibm1: iterations must be >= 1");

  const Interned data = intern(corpus);
  SparseTable t(data.src_words.size());
  for (std::size_t k = 0; k < data.src.size(); ++k) {
    for (int s : data.src[k]) {
      for (int w : data.tgt[k]) t[s].emplace(w, 0.0);
    }
  }
  for (auto& row : t) {
    const double u = 1.0 / static_cast<double>(row.size());
    for (auto& [w, p] : row) p = u;
  }

  std::vector<double> denom;
  for (int it = 0; it < iterations; ++it) {
    SparseTable counts(t.size());
    double ll = 0.0;
    for (std::size_t k = 0; k < data.src.size(); ++k) {
      const auto& src = data.src[k];
      const auto& tgt = data.tgt[k];
      denom.assign(tgt.size(), 0.0);
      for (std::size_t j = 0; j < tgt.size(); ++j) {
        for (int s : src) denom[j] += t[s].at(tgt[j]);
        ll += std::log(denom[j] / static_cast<double>(src.size()));
      }
      for (std::size_t j = 0; j < tgt.size(); ++j) {
        for (int s : src) counts[s][tgt[j]] += t[s].at(tgt[j]) / denom[j];
      }
    }
    if (log_likelihood) log_likelihood->push_back(ll);
    for (std::size_t s = 0; s < t.size(); ++s) {
      double total = 0.0;
      for (const auto& [w, c] : counts[s]) total += c;
      for (auto& [w, p] : t[s]) p = counts[s][w] / total;
    }
  }

  TranslationTable out;
  for (std::size_t s = 0; s < t.size(); ++s) {
    for (const auto& [w, p] : t[s]) out.set(data.src_words[s], data.tgt_words[w], p);
  }
  return out;
}

double ibm1_log_likelihood(const Corpus& corpus, const TranslationTable& table) {
  double ll = 0.0;
  for (const auto& p : corpus) {
    for (const auto& y : p.target) {
      double z = 0.0;
      for (const auto& x : p.source) z += table.prob(x.surface, y.surface);
      ll += std::log(z / static_cast<double>(p.source.size()));
    }
  }
  return ll;
}

Corpus reversed(const Corpus& corpus) {
  Corpus out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back(SentencePair{p.target, p.source});
  return out;
}

AlignmentLinks viterbi_forward(const SentencePair& pair, const TranslationTable& fwd) {
  AlignmentLinks links;
  for (std::size_t j = 0; j < pair.target.size(); ++j) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t i = 0; i < pair.source.size(); ++i) {
      const double p = fwd.prob(pair.source[i].surface, pair.target[j].surface);
      if (p > best) {
        best = p;
        arg = static_cast<int>(i);
      }
    }
    if (arg >= 0) links.emplace(arg, static_cast<int>(j));
  }
  return links;
}

AlignmentLinks viterbi_reverse(const SentencePair& pair, const TranslationTable& rev) {
  AlignmentLinks links;
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t j = 0; j < pair.target.size(); ++j) {
      const double p = rev.prob(pair.target[j].surface, pair.source[i].surface);
      if (p > best) {
        best = p;
        arg = static_cast<int>(j);
      }
    }
    if (arg >= 0) links.emplace(static_cast<int>(i), arg);
  }
  return links;
}

AlignmentLinks align_pair(const SentencePair& pair, const TranslationTable& fwd,
                          const TranslationTable& rev) {
  const auto f = viterbi_forward(pair, fwd);
  const auto r = viterbi_reverse(pair, rev);
  AlignmentLinks out;
  for (const auto& l : f) {
    if (r.count(l)) out.insert(l);
  }
  return out;
}

std::string to_pharaoh(const AlignmentLinks& links) {
  std::string out;
  for (const auto& [i, j] : links) {
    if (!out.empty()) out.push_back(' ');
    out += std::to_string(i) + "-" + std::to_string(j);
  }
  return out;
}

AlignmentLinks from_pharaoh(const std::string& line) {
  AlignmentLinks out;
  for (const auto& w : split_words(line)) {
    const auto dash = w.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == w.size() ||
        w.find_first_not_of("0123456789-") != std::string::npos || w.find('-', dash + 1) != std::string::npos) {
      throw Error("malformed alignment link: " + w);
    }
    out.emplace(std::stoi(w.substr(0, dash)), std::stoi(w.substr(dash + 1)));
  }
  return out;
}

}  // namespace csmt
