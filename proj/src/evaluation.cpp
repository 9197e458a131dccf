#include "csmt/evaluation.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "csmt/error.hpp"

namespace csmt {

namespace {

std::map<Words, std::size_t> ngram_counts(const Words& w, std::size_t n) {
  std::map<Words, std::size_t> out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    ++out[Words(w.begin() + static_cast<std::ptrdiff_t>(i), w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double BleuStats::score() const {
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  const double bp = hyp_len < ref_len && hyp_len > 0
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

BleuStats bleu_stats(const std::vector<Words>& hyps, const std::vector<std::vector<Words>>& refs) {
  if (hyps.size() != refs.size()) {
    throw Error("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " + std::to_string(refs.size()) +
                " reference lines");
  }
  BleuStats st;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto& hyp = hyps[k];
    const auto& rs = refs[k];
    if (rs.empty()) throw Error("bleu: line " + std::to_string(k) + " has no reference");
    st.hyp_len += hyp.size();
    std::size_t best = rs[0].size();
    for (const auto& r : rs) {
      const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    st.ref_len += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      std::map<Words, std::size_t> max_ref;
      for (const auto& r : rs) {
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : h) {
        auto it = max_ref.find(g);
        if (it != max_ref.end()) st.matches[n - 1] += std::min(c, it->second);
      }
      st.totals[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
  }
  return st;
}

double corpus_bleu(const std::vector<Words>& hyps, const std::vector<std::vector<Words>>& refs) {
  return bleu_stats(hyps, refs).score();
}

double corpus_bleu(const std::vector<Words>& hyps, const std::vector<Words>& single_refs) {
  std::vector<std::vector<Words>> refs;
  refs.reserve(single_refs.size());
  for (const auto& r : single_refs) refs.push_back({r});
  return corpus_bleu(hyps, refs);
}

CopySuccess copy_success_rate(const std::vector<Words>& hyps, const std::vector<std::vector<LexiconEntry>>& applied) {
  if (hyps.size() != applied.size()) throw Error("copy_success_rate: hypotheses vs constraint sets mismatch");
  CopySuccess cs;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    for (const auto& e : applied[k]) {
      ++cs.applied;
      if (contains_phrase(hyps[k], e.tgt)) ++cs.copied;
    }
  }
  cs.no_constraints = cs.applied == 0;
  cs.rate = cs.no_constraints ? 1.0 : static_cast<double>(cs.copied) / static_cast<double>(cs.applied);
  return cs;
}

EvalReport evaluate_system(const std::string& name, const Model& model, const Corpus& test,
                           const std::vector<ConstraintSet>* constraints, const BeamOptions& beam) {
  std::vector<Sentence> inputs;
  std::vector<Words> refs;
  for (const auto& p : test) {
    inputs.push_back(p.source);
    refs.push_back(surfaces(p.target));
  }
  const auto records = translate_corpus(model, inputs, constraints, beam);
  std::vector<Words> hyps;
  std::vector<std::vector<LexiconEntry>> applied;
  EvalReport rep;
  rep.system = name;
  for (const auto& r : records) {
    hyps.push_back(r.hypothesis.tokens);
    applied.push_back(r.applied);
    ++rep.n_constraints[r.applied.size()];
  }
  rep.bleu = corpus_bleu(hyps, refs);
  rep.copy_success_rate = copy_success_rate(hyps, applied).rate;
  return rep;
}

std::vector<SweepRow> replacement_sweep(const Corpus& test, const PhraseTable& table,
                                        const std::vector<NamedModel>& systems, int n_max, std::uint64_t seed,
                                        const BeamOptions& beam) {
  std::vector<SweepRow> rows;
  for (int n = 0; n <= n_max; ++n) {
    std::vector<ConstraintSet> sets;
    std::size_t short_count = 0;
    for (std::size_t k = 0; k < test.size(); ++k) {
      sets.push_back(sample_constraints_from_reference(test[k], table, static_cast<std::size_t>(n),
                                                       seed + 1000003ull * static_cast<std::uint64_t>(n) + k));
      if (sets.back().size() < static_cast<std::size_t>(n)) ++short_count;
    }
    if (short_count > 0) {
      std::clog << "sweep n=" << n << ": " << short_count << " sentences with fewer than " << n
                << " eligible constraints\n";
    }
    for (const auto& sys : systems) {
      const auto rep = evaluate_system(sys.name, *sys.model, test, &sets, beam);
      SweepRow row{sys.name, n, rep.bleu, 0.0, rep.copy_success_rate, short_count};
      rows.push_back(row);
    }
  }
  // delta against the n = 0 row of the same system
  std::map<std::string, double> base;
  for (const auto& r : rows) {
    if (r.n == 0) base[r.system] = r.bleu;
  }
  for (auto& r : rows) r.delta = r.bleu - base[r.system];
  return rows;
}

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "system\tn\tbleu\tdelta\tcsr\n";
  for (const auto& r : rows) os << r.system << '\t' << r.n << '\t' << r.bleu << '\t' << r.delta << '\t' << r.csr << '\n';
  return os.str();
}

std::pair<EvalReport, EvalReport> regression_compare(const Model& baseline, const Model& augmented,
                                                     const Corpus& plain_test, const BeamOptions& beam) {
  return {evaluate_system("baseline", baseline, plain_test, nullptr, beam),
          evaluate_system("augmented", augmented, plain_test, nullptr, beam)};
}

std::string reports_tsv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "system\tbleu\tcsr\tconstraint_histogram\n";
  for (const auto& r : reports) {
    os << r.system << '\t' << r.bleu << '\t' << r.copy_success_rate << '\t';
    bool first = true;
    for (const auto& [n, c] : r.n_constraints) {
      os << (first ? "" : ",") << n << ':' << c;
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace csmt
