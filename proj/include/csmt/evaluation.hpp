#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csmt/constraints.hpp"
#include "csmt/decoding.hpp"
#include "csmt/model.hpp"
#include "csmt/phrase_table.hpp"

namespace csmt {

using Words = std::vector<std::string>;

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  double score() const;  // percentage
};

/// Corpus BLEU-4 sufficient statistics: clipped n-gram matches against the
/// per-n-gram maximum over references, closest reference length (shorter
/// on ties) for the brevity penalty.
BleuStats bleu_stats(const std::vector<Words>& hyps, const std::vector<std::vector<Words>>& refs);

/// No smoothing: zero matches at any order gives 0.
double corpus_bleu(const std::vector<Words>& hyps, const std::vector<std::vector<Words>>& refs);
double corpus_bleu(const std::vector<Words>& hyps, const std::vector<Words>& single_refs);

struct CopySuccess {
  std::size_t applied = 0;
  std::size_t copied = 0;
  double rate = 1.0;
  bool no_constraints = true;  // rate defaults to 1.0 when nothing was applied
};

/// Fraction of applied constraint targets found contiguously in the hypothesis.
CopySuccess copy_success_rate(const std::vector<Words>& hyps,
                              const std::vector<std::vector<LexiconEntry>>& applied);

struct EvalReport {
  std::string system;
  double bleu = 0.0;
  double copy_success_rate = 1.0;
  std::map<std::size_t, std::size_t> n_constraints;  // applied count -> sentences
};

struct NamedModel {
  std::string name;
  const Model* model = nullptr;
};

struct SweepRow {
  std::string system;
  int n = 0;
  double bleu = 0.0;
  double delta = 0.0;  // bleu(n) - bleu(0) of the same system
  double csr = 1.0;
  std::size_t short_sentences = 0;  // sentences with fewer than n eligible constraints
};

/// For n = 0..n_max: sample n reference constraints per sentence, translate,
/// and score each system.
std::vector<SweepRow> replacement_sweep(const Corpus& test, const PhraseTable& table,
                                        const std::vector<NamedModel>& systems, int n_max, std::uint64_t seed,
                                        const BeamOptions& beam);

/// `system \t n \t bleu \t delta \t csr`, header first.
std::string sweep_tsv(const std::vector<SweepRow>& rows);

/// BLEU of a system with (optional) constraints on a test corpus.
EvalReport evaluate_system(const std::string& name, const Model& model, const Corpus& test,
                           const std::vector<ConstraintSet>* constraints, const BeamOptions& beam);

/// Both systems on the unmodified test input.
std::pair<EvalReport, EvalReport> regression_compare(const Model& baseline, const Model& augmented,
                                                     const Corpus& plain_test, const BeamOptions& beam);

std::string reports_tsv(const std::vector<EvalReport>& reports);

}  // namespace csmt
