#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "csmt/corpus_io.hpp"

namespace csmt {

/// Lexical table t(tgt | src) from IBM Model 1 (no NULL word).
class TranslationTable {
 public:
  using Row = std::map<std::string, double>;

  double prob(const std::string& src, const std::string& tgt) const;
  const std::map<std::string, Row>& rows() const { return rows_; }
  void set(const std::string& src, const std::string& tgt, double p) {
    rows_[src][tgt] = p;
  }

  /// TSV `src \t tgt \t prob`, rows in lexicographic order.
  std::string to_tsv() const;
  static TranslationTable from_tsv(const std::string& text);

 private:
  std::map<std::string, Row> rows_;
};

/// (source index, target index) links of one sentence pair.
using AlignmentLinks = std::set<std::pair<int, int>>;

/// EM training of t(tgt|src), uniform init over co-occurring pairs.
/// When `log_likelihood` is given, it receives the corpus log-likelihood
/// under the parameters entering each iteration.
TranslationTable train_ibm1(const Corpus& corpus, int iterations,
                            std::vector<double>* log_likelihood = nullptr);

double ibm1_log_likelihood(const Corpus& corpus, const TranslationTable& table);

/// Swaps source and target sides (for the reverse direction model).
Corpus reversed(const Corpus& corpus);

/// argmax over source positions for each target word (fwd = t(tgt|src)).
AlignmentLinks viterbi_forward(const SentencePair& pair, const TranslationTable& fwd);
/// argmax over target positions for each source word (rev = t(src|tgt)).
AlignmentLinks viterbi_reverse(const SentencePair& pair, const TranslationTable& rev);

/// Intersection of both directional Viterbi alignments.
AlignmentLinks align_pair(const SentencePair& pair, const TranslationTable& fwd,
                          const TranslationTable& rev);

std::string to_pharaoh(const AlignmentLinks& links);
AlignmentLinks from_pharaoh(const std::string& line);

}  // namespace csmt
