// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csmt/augmentation.hpp"
#include "csmt/config.hpp"
#include "csmt/constraints.hpp"
#include "csmt/error.hpp"
#include "csmt/decoding.hpp"
#include "csmt/evaluation.hpp"
#include "csmt/io.hpp"
#include "csmt/phrase_table.hpp"
#include "csmt/pipeline.hpp"
#include "csmt/rng.hpp"
#include "csmt/trainer.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace csmt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(1);
  line << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail << " [" << secs << "s]";
  std::cout << line.str() << std::endl;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific;
  os.precision(2);
  os << v;
  return os.str();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

/// Rows of a TSV report keyed by their first column(s).
std::vector<std::map<std::string, std::string>> read_tsv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(path + " is empty");
  const auto header = split_words(lines[0]);
  std::vector<std::map<std::string, std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_words(lines[i]);
    if (cells.size() != header.size()) throw Error(path + ": ragged row " + std::to_string(i));
    std::map<std::string, std::string> row;
    for (std::size_t c = 0; c < cells.size(); ++c) row[header[c]] = cells[c];
    rows.push_back(row);
  }
  return rows;
}

const std::map<std::string, std::string>& row_where(const std::vector<std::map<std::string, std::string>>& rows,
                                                    const std::string& key, const std::string& value) {
  for (const auto& r : rows) {
    if (r.at(key) == value) return r;
  }
  throw Error("no row with " + key + " = " + value);
}

PipelineConfig desk_config(const fs::path& dir) {
  auto kv = KeyValueConfig::load(CSMT_DESK_CONFIG);
  kv.set("run.work_dir", dir.string());
  return PipelineConfig::from(kv);
}

// 1 -------------------------------------------------------------------------

Outcome mixture_normalization() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ffn = 32;
  cfg.dropout = 0.0;
  cfg.max_len = 32;
  cfg.vocab_mode = VocabMode::SharedPointer;
  Corpus corpus;
  Rng rng(2024);
  for (int k = 0; k < 40; ++k) {
    Sentence s, t;
    const int len = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < len; ++i) {
      s.push_back(Token{"s" + std::to_string(rng.below(15)), Lang::Src});
      t.push_back(Token{"t" + std::to_string(rng.below(15)), Lang::Tgt});
    }
    corpus.push_back({s, t});
  }
  auto [vs, vt] = build_model_vocabularies(corpus, cfg);
  const int n_tgt = static_cast<int>(vt.size());
  const int n_src = static_cast<int>(vs.size());

  double worst = 0.0;
  std::size_t nonzero_absent = 0, absent_checked = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const Model m(cfg, vs, vt, 1000 + static_cast<std::uint64_t>(draw));
    Sentence src;
    const int len = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < len; ++i) {
      const double u = rng.uniform();
      if (u < 0.7) {
        src.push_back(Token{"s" + std::to_string(rng.below(15)), Lang::Src});
      } else if (u < 0.9) {
        src.push_back(Token{"t" + std::to_string(rng.below(15)), Lang::Tgt});
      } else {
        src.push_back(Token{"oov" + std::to_string(rng.below(3)), Lang::Src});
      }
    }
    const auto prepared = m.prepare_source(src);
    const auto enc = m.encode(prepared);
    std::vector<int> prefix{Vocabulary::kBos};
    const int plen = static_cast<int>(rng.below(5));
    for (int i = 0; i < plen; ++i) prefix.push_back(4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_tgt - 4))));
    const auto p = m.output_distribution(m.decode_step(prefix, enc), prepared);
    if (static_cast<int>(p.size()) != m.extended_size(prepared)) return {false, "distribution width mismatch"};
    double total = 0.0;
    for (double x : p) total += x;
    worst = std::max(worst, std::abs(total - 1.0));
    for (int v = 4; v < n_src; ++v) {
      const auto& word = vs.surface_of(v);
      bool present = false;
      for (const auto& t : src) present = present || (t.lang == Lang::Src && t.surface == word);
      if (present) continue;
      ++absent_checked;
      if (p[static_cast<std::size_t>(n_tgt + v)] != 0.0) ++nonzero_absent;
    }
  }
  const bool ok = worst <= 1e-6 && nonzero_absent == 0;
  return {ok, "max |sum - 1| = " + sci(worst) + ", nonzero absent-word entries " +
                  std::to_string(nonzero_absent) + "/" + std::to_string(absent_checked)};
}

// 2 -------------------------------------------------------------------------

Outcome gradient_fidelity() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ffn = 32;
  cfg.max_len = 32;
  cfg.dropout = 0.0;
  cfg.vocab_mode = VocabMode::SharedPointer;
  Corpus corpus = {test::pair("a b c", "X Y Z"), test::pair("c a", "Z X"), test::pair("b q", "Y Q")};
  Sentence cs = tokenize("a b");
  cs.push_back(Token{"Z", Lang::Tgt});
  corpus.push_back({cs, tokenize("X Y Z", Lang::Tgt)});
  auto [vs, vt] = build_model_vocabularies(corpus, cfg);
  Model m(cfg, vs, vt, 3);
  std::vector<Example> batch;
  for (const auto& p : corpus) batch.push_back(m.make_example(p));
  const auto rep = gradient_check(m, batch, 1e-5, 20, 1);
  return {rep.max_relative_error <= 1e-3, "max relative error " + sci(rep.max_relative_error) +
                                              " over " + std::to_string(rep.coordinates_checked) +
                                              " coordinates (worst " + rep.worst_tensor + ")"};
}

// 3 -------------------------------------------------------------------------

Outcome extraction_oracle() {
  Rng rng(99);
  int mismatches = 0;
  std::size_t phrases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(6));
    // small vocabularies so repeated words occur
    std::string s, t;
    for (int i = 0; i < m; ++i) s += "s" + std::to_string(rng.below(3)) + " ";
    for (int j = 0; j < n; ++j) t += "t" + std::to_string(rng.below(3)) + " ";
    const auto pair = test::pair(s, t);
    AlignmentLinks links;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        if (rng.uniform() < 0.3) links.emplace(i, j);
      }
    }
    std::set<PhrasePair> oracle;
    for (const auto& b : test::brute_force_boxes(m, n, links, kMaxSrcPhrase, 5)) {
      oracle.insert({phrase_of(pair.source, b.src), phrase_of(pair.target, b.tgt)});
    }
    const auto got = extract_consistent_phrases(pair, links);
    phrases += got.size();
    if (got != oracle) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatching pairs of 200 (" + std::to_string(phrases) +
                               " phrase pairs)"};
}

// 4 -------------------------------------------------------------------------

Outcome sampling_caps() {
  Corpus c;
  std::vector<AlignmentLinks> al;
  for (int k = 0; k < 12; ++k) {
    c.push_back(test::pair("a b", "X Y"));
    al.push_back({{0, 0}, {1, 1}});
  }
  PhraseTable table;
  table.add({"a"}, {"X"}, 10);
  table.add({"b"}, {"Y"}, 10);
  table.normalize();
  const auto idx = build_match_index(c, table, al);
  SamplingOptions opts;
  opts.k1 = 5;
  opts.k2 = 2;
  opts.seed = 3;
  std::map<std::string, std::size_t> per;
  for (const auto& a : sample_augmented(idx, c, opts)) {
    std::string key;
    for (const auto& r : a.replacements) key += join(r.original) + ">" + join(r.inserted) + ";";
    ++per[key];
  }
  const bool ok = per["a>X;"] == 5 && per["b>Y;"] == 5 && per["a>X;b>Y;"] == 2 && per.size() == 3;
  return {ok, "single a>X " + std::to_string(per["a>X;"]) + ", b>Y " + std::to_string(per["b>Y;"]) +
                  ", combination " + std::to_string(per["a>X;b>Y;"]) + " (12 matches each, k1=5, k2=2)"};
}

// 7 -------------------------------------------------------------------------

Outcome speed_parity(const fs::path& run) {
  const auto model = load_checkpoint((run / "models/pointer").string());
  const auto test_src = read_lines((run / "data/test.src").string());
  const auto sets = constraints_from_jsonl(read_file((run / "translate/test.constraints.jsonl").string()));
  std::size_t compared = 0, mismatched = 0, tokens = 0;
  for (std::size_t k = 0; k < test_src.size(); ++k) {
    const auto plain = tokenize(test_src[k]);
    const auto constrained = apply_constraints(plain, sets[k]).source;
    if (constrained.size() != plain.size()) continue;  // matched lengths only
    for (const auto* input : {&plain, &constrained}) {
      model.reset_decode_step_calls();
      const auto h = beam_search(model, *input, {1, 0});
      tokens += h.ids.size();
      if (model.decode_step_calls() != h.ids.size()) ++mismatched;
    }
    ++compared;
  }
  return {compared > 0 && mismatched == 0,
          std::to_string(compared) + " matched-length pairs, " + std::to_string(tokens) +
              " emitted ids, decode_step calls per emitted id = 1 on both sides, " + std::to_string(mismatched) +
              " mismatches"};
}

// 9 -------------------------------------------------------------------------

Outcome placeholder_round_trip(const fs::path& run) {
  Corpus test;
  const auto src = read_lines((run / "data/test.src").string());
  const auto tgt = read_lines((run / "data/test.tgt").string());
  for (std::size_t k = 0; k < src.size(); ++k) test.push_back({tokenize(src[k]), tokenize(tgt[k], Lang::Tgt)});
  const auto table = PhraseTable::from_moses(read_file((run / "table/phrase_table.pruned").string()));
  std::vector<Words> hyps;
  std::vector<std::vector<LexiconEntry>> applied;
  std::size_t untag_failures = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto cs = sample_constraints_from_reference(test[k], table, 1 + k % 4, 500 + k);
    const auto tagged = tag_source(test[k].source, cs);
    const auto stub = surfaces(tagged.source);  // identity translator
    const auto out = untag_output(stub, tagged.tags);
    untag_failures += out.failures;
    hyps.push_back(out.tokens);
    applied.push_back(apply_constraints(test[k].source, cs).applied);
  }
  const auto csr = copy_success_rate(hyps, applied);
  return {csr.rate == 1.0 && untag_failures == 0 && csr.applied > 0,
          "CSR " + fmt(csr.rate) + " (" + std::to_string(csr.copied) + "/" + std::to_string(csr.applied) +
              "), untag failures " + std::to_string(untag_failures)};
}

// 10 ------------------------------------------------------------------------

Outcome bleu_oracle() {
  auto w = [](std::initializer_list<const char*> xs) {
    std::vector<Words> out;
    for (const char* x : xs) out.push_back(split_words(x));
    return out;
  };
  const auto h = w({"the cat sat on the mat", "a dog ran in the park today", "it is a nice day"});
  const auto r = w({"the cat sat on a mat", "the dog ran in the park", "it is a very nice day"});
  // precisions 15/18, 10/15, 6/12, 3/9 with no brevity penalty
  const double oracle = 100.0 * std::exp((std::log(15.0 / 18) + std::log(10.0 / 15) + std::log(6.0 / 12) +
                                          std::log(3.0 / 9)) / 4.0);
  const double got = corpus_bleu(h, r);
  const double self = corpus_bleu(h, h);
  const double zero = corpus_bleu(w({"p q r s t"}), w({"a b c d e"}));
  const bool ok = std::abs(got - oracle) <= 0.01 && std::abs(self - 100.0) <= 1e-9 && zero == 0.0;
  return {ok, "example " + fmt(got) + " vs oracle " + fmt(oracle) + ", BLEU(h,h) " + fmt(self) + ", zero overlap " +
                  fmt(zero)};
}

// 11 ------------------------------------------------------------------------

Outcome determinism(const fs::path& a, const fs::path& b, const PipelineConfig& cfg) {
  std::vector<std::string> files = {"augment/augmented.jsonl", "augment/placeholder.src", "augment/placeholder.tgt",
                                    "reports/eval.tsv", "reports/regression.tsv", "reports/sweep.tsv"};
  for (const auto& s : cfg.systems) {
    files.push_back("models/" + s.name + ".json");
    files.push_back("models/" + s.name + ".bin");
  }
  std::size_t differing = 0;
  std::string first;
  for (const auto& rel : files) {
    if (sha256_file((a / rel).string()) != sha256_file((b / rel).string())) {
      if (differing++ == 0) first = rel;
    }
  }
  return {differing == 0, std::to_string(files.size()) + " artifacts compared, " + std::to_string(differing) +
                              " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main() {
  report(1, "mixture normalization", mixture_normalization);
  report(2, "gradient fidelity", gradient_fidelity);
  report(3, "phrase extraction oracle", extraction_oracle);
  report(4, "sampling caps", sampling_caps);

  test::TempDir dir_a("accept_a"), dir_b("accept_b");
  const auto cfg = desk_config(dir_a.path());
  std::ostringstream log_a, log_b;
  const auto t0 = std::chrono::steady_clock::now();
  bool run_ok = true;
  std::string run_error;
  try {
    run_stage(Stage::All, cfg, log_a);
  } catch (const std::exception& e) {
    run_ok = false;
    run_error = e.what();
  }
  const double desk_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << log_a.str();
  const fs::path run = dir_a.path();
  auto needs_run = [&](const std::function<Outcome()>& body) {
    return [&, body] { return run_ok ? body() : Outcome{false, "desk pipeline failed: " + run_error}; };
  };

  report(5, "synthetic copy task", needs_run([&] {
           const auto eval = read_tsv((run / "reports/eval.tsv").string());
           const double csr_ptr = std::stod(row_where(eval, "system", "pointer").at("csr"));
           const double csr_merged = std::stod(row_where(eval, "system", "merged").at("csr"));
           const double csr_shared = std::stod(row_where(eval, "system", "shared").at("csr"));
           const bool ok = csr_ptr >= 0.90 && csr_ptr >= csr_merged - 0.01 && desk_secs <= 900.0;
           return Outcome{ok, "CSR shared_pointer " + fmt(csr_ptr) + ", merged " + fmt(csr_merged) + ", shared " +
                                  fmt(csr_shared) + "; full desk pipeline " + fmt(desk_secs, 1) + "s (limit 900s)"};
         }));

  report(6, "multi-replacement robustness", needs_run([&] {
           const auto rows = read_tsv((run / "reports/sweep.tsv").string());
           std::map<int, double> csr;
           for (const auto& r : rows) {
             if (r.at("system") == "pointer") csr[std::stoi(r.at("n"))] = std::stod(r.at("csr"));
           }
           bool all_n = true;
           for (int n = 0; n <= 7; ++n) all_n = all_n && csr.count(n) == 1;
           const bool ok = all_n && std::abs(csr.at(4) - csr.at(1)) <= 0.10;
           return Outcome{ok, "CSR n=1 " + fmt(csr[1]) + ", n=4 " + fmt(csr[4]) + ", sweep rows n=0..7 " +
                                  (all_n ? "present" : "missing")};
         }));

  report(7, "speed parity", needs_run([&] { return speed_parity(run); }));

  report(8, "non-code-switched regression", needs_run([&] {
           const auto rows = read_tsv((run / "reports/regression.tsv").string());
           const auto& r = row_where(rows, "system", "pointer");
           const double diff = std::stod(r.at("difference"));
           return Outcome{std::abs(diff) <= 1.0, "plain-input BLEU baseline " + r.at("bleu_baseline") +
                                                     ", augmented shared_pointer " + r.at("bleu_system") +
                                                     ", difference " + fmt(diff)};
         }));

  report(9, "placeholder round trip", needs_run([&] { return placeholder_round_trip(run); }));
  report(10, "BLEU scorer oracle", bleu_oracle);

  report(11, "determinism", needs_run([&] {
           auto cfg_b = cfg;
           cfg_b.work_dir = dir_b.path().string();
           run_stage(Stage::All, cfg_b, log_b);
           return determinism(dir_a.path(), dir_b.path(), cfg);
         }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
