#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "csmt/constraints.hpp"
#include "csmt/corpus_io.hpp"
#include "csmt/model.hpp"

namespace csmt {

struct Hypothesis {
  std::vector<int> ids;  // extended ids after BOS; ends with EOS when finished
  std::vector<std::string> tokens;  // surfaces, EOS excluded
  double log_prob = 0.0;
  bool finished = false;

  /// Length-normalised score (log_prob / number of emitted ids).
  double score() const;
};

struct BeamOptions {
  int beam_size = 5;
  int max_len = 0;  // 0: 2 * source length + 5
};

/// Work counters: one decode_step per expanded hypothesis per step.
struct DecodeStats {
  std::size_t decode_steps = 0;
  std::size_t expanded_tokens = 0;
  std::size_t beam_steps = 0;
};

/// Ordinary beam search over the model's output distribution. There is no
/// constraint argument: constrained inputs are rewritten beforehand.
Hypothesis beam_search(const Model& model, const Sentence& source, const BeamOptions& opts,
                       DecodeStats* stats = nullptr);

struct TranslationRecord {
  Sentence input;                     // after constraint rewriting
  std::vector<LexiconEntry> applied;  // from apply_constraints
  Hypothesis hypothesis;
};

/// apply_constraints (when sets are given, one per input) then beam_search.
std::vector<TranslationRecord> translate_corpus(const Model& model, const std::vector<Sentence>& inputs,
                                                const std::vector<ConstraintSet>* constraints,
                                                const BeamOptions& opts, DecodeStats* stats = nullptr);

/// Plain hypotheses, one per line.
std::vector<std::string> hypothesis_lines(const std::vector<TranslationRecord>& records);
/// JSON lines: input, applied constraints, hypothesis, score, finished flag.
std::string audit_jsonl(const std::vector<TranslationRecord>& records);

}  // namespace csmt
