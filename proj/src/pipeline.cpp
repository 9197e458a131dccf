#include "csmt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "csmt/aligner.hpp"
#include "csmt/augmentation.hpp"
#include "csmt/constraints.hpp"
#include "csmt/error.hpp"
#include "csmt/evaluation.hpp"
#include "csmt/io.hpp"
#include "csmt/phrase_table.hpp"
#include "csmt/trainer.hpp"
#include "json.hpp"

namespace csmt {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::Synth, "synth"},         {Stage::Align, "align"},       {Stage::Table, "table"},
      {Stage::Augment, "augment"},     {Stage::Train, "train"},       {Stage::Translate, "translate"},
      {Stage::Evaluate, "evaluate"},   {Stage::Sweep, "sweep"},       {Stage::All, "all"},
  };
  return names;
}

// Artifact paths, relative to work_dir.
constexpr const char* kTrainSrc = "data/train.src";
constexpr const char* kTrainTgt = "data/train.tgt";
constexpr const char* kTestSrc = "data/test.src";
constexpr const char* kTestTgt = "data/test.tgt";
constexpr const char* kLexicon = "data/lexicon.tsv";
constexpr const char* kFwdTable = "align/fwd.t";
constexpr const char* kRevTable = "align/rev.t";
constexpr const char* kAlignments = "align/train.align";
constexpr const char* kFullTable = "table/phrase_table.full";
constexpr const char* kPrunedTable = "table/phrase_table.pruned";
constexpr const char* kAugmented = "augment/augmented.jsonl";
constexpr const char* kCodeSwitched = "augment/augmented.cs.txt";
constexpr const char* kPlaceholderSrc = "augment/placeholder.src";
constexpr const char* kPlaceholderTgt = "augment/placeholder.tgt";
constexpr const char* kTestConstraints = "translate/test.constraints.jsonl";
constexpr const char* kEvalReport = "reports/eval.tsv";
constexpr const char* kRegressionReport = "reports/regression.tsv";
constexpr const char* kSweepReport = "reports/sweep.tsv";
constexpr const char* kManifest = "manifest.json";

// Stage seed offsets from the base seed.
constexpr std::uint64_t kAugmentSeed = 1;
constexpr std::uint64_t kPlaceholderSeed = 2;
constexpr std::uint64_t kConstraintSeed = 3;
constexpr std::uint64_t kSweepSeed = 4;

std::string model_prefix(const SystemSpec& s) { return "models/" + s.name; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Depends on the system name only, so reordering the list changes nothing.
std::uint64_t system_seed(const PipelineConfig& cfg, const SystemSpec& s) {
  return cfg.seed ^ (fnv1a(s.name) & 0xffffffffull) << 8;
}

class Workspace {
 public:
  explicit Workspace(const PipelineConfig& cfg) : root_(cfg.work_dir) {}

  std::string path(const std::string& rel) const { return (fs::path(root_) / rel).string(); }
  bool exists(const std::string& rel) const { return fs::exists(path(rel)); }

  void require(const std::string& rel, Stage producer) const {
    if (!exists(rel)) {
      throw PreconditionError("missing " + path(rel) + "; run the '" + to_string(producer) + "' stage first");
    }
  }

  void write(const std::string& rel, std::string_view content) const { write_file_atomic(path(rel), content); }
  std::string read(const std::string& rel) const { return read_file(path(rel)); }

  Corpus read_corpus(const std::string& src, const std::string& tgt, std::size_t max_len) const {
    return read_parallel(path(src), path(tgt), max_len);
  }

 private:
  std::string root_;
};

std::string lines_text(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::vector<std::string> source_lines(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& p : c) out.push_back(join(p.source));
  return out;
}

std::vector<std::string> target_lines(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& p : c) out.push_back(join(p.target));
  return out;
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

void update_manifest(const Workspace& ws, const PipelineConfig& cfg, Stage stage) {
  nlohmann::json manifest = nlohmann::json::object();
  if (ws.exists(kManifest)) manifest = nlohmann::json::parse(ws.read(kManifest));
  manifest["version"] = 1;
  manifest["seed"] = cfg.seed;
  nlohmann::json files = nlohmann::json::object();
  for (const auto& rel : stage_outputs(stage, cfg)) {
    if (ws.exists(rel)) files[rel] = sha256_file(ws.path(rel));
  }
  manifest["stages"][to_string(stage)] = files;
  ws.write(kManifest, manifest.dump(2) + "\n");
}

Corpus load_train(const Workspace& ws, const PipelineConfig& cfg) {
  ws.require(kTrainSrc, Stage::Synth);
  ws.require(kTrainTgt, Stage::Synth);
  return ws.read_corpus(kTrainSrc, kTrainTgt, static_cast<std::size_t>(cfg.max_sentence_len));
}

Corpus load_test(const Workspace& ws, const PipelineConfig& cfg) {
  ws.require(kTestSrc, Stage::Synth);
  ws.require(kTestTgt, Stage::Synth);
  return ws.read_corpus(kTestSrc, kTestTgt, static_cast<std::size_t>(cfg.max_sentence_len));
}

std::vector<AlignmentLinks> load_alignments(const Workspace& ws, std::size_t expected) {
  ws.require(kAlignments, Stage::Align);
  std::vector<AlignmentLinks> out;
  for (const auto& line : read_lines(ws.path(kAlignments))) out.push_back(from_pharaoh(line));
  if (out.size() != expected) {
    throw Error("alignment count " + std::to_string(out.size()) + " does not match corpus size " +
                std::to_string(expected) + "; rerun the 'align' stage");
  }
  return out;
}

PhraseTable load_pruned_table(const Workspace& ws) {
  ws.require(kPrunedTable, Stage::Table);
  return PhraseTable::from_moses(ws.read(kPrunedTable));
}

Model load_system(const Workspace& ws, const SystemSpec& s) {
  ws.require(model_prefix(s) + ".json", Stage::Train);
  return load_checkpoint(ws.path(model_prefix(s)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- stages -------------------------------------------------------------------

void run_synth(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const bool external = !cfg.train_src.empty();
  Corpus train, test;
  std::vector<LexiconEntry> lexicon;
  if (external) {
    ReadStats st;
    const auto max_len = static_cast<std::size_t>(cfg.max_sentence_len);
    train = read_parallel(cfg.train_src, cfg.train_tgt, max_len, &st);
    log << "read " << st.read << " training pairs, dropped " << st.dropped << "\n";
    test = read_parallel(cfg.test_src, cfg.test_tgt, max_len, &st);
    log << "read " << st.read << " test pairs, dropped " << st.dropped << "\n";
    if (!cfg.lexicon.empty()) lexicon = read_lexicon(cfg.lexicon);
  } else {
    auto task = make_synthetic_task(cfg.synth, cfg.seed);
    train = std::move(task.train);
    test = std::move(task.test);
    lexicon = std::move(task.lexicon);
    log << "synthetic task: " << train.size() << " train, " << test.size() << " test pairs\n";
  }
  ws.write(kTrainSrc, lines_text(source_lines(train)));
  ws.write(kTrainTgt, lines_text(target_lines(train)));
  ws.write(kTestSrc, lines_text(source_lines(test)));
  ws.write(kTestTgt, lines_text(target_lines(test)));
  ws.write(kLexicon, lexicon_to_tsv(lexicon));
}

void run_align(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const Corpus train = load_train(ws, cfg);
  std::vector<double> ll;
  const auto fwd = train_ibm1(train, cfg.align_iterations, &ll);
  log << "forward model 1: log-likelihood " << ll.front() << " -> " << ll.back() << "\n";
  const auto rev = train_ibm1(reversed(train), cfg.align_iterations, &ll);
  log << "reverse model 1: log-likelihood " << ll.front() << " -> " << ll.back() << "\n";
  std::vector<std::string> lines;
  std::size_t links = 0;
  for (const auto& p : train) {
    const auto a = align_pair(p, fwd, rev);
    links += a.size();
    lines.push_back(to_pharaoh(a));
  }
  log << "intersection: " << links << " links over " << train.size() << " pairs\n";
  ws.write(kFwdTable, fwd.to_tsv());
  ws.write(kRevTable, rev.to_tsv());
  ws.write(kAlignments, lines_text(lines));
}

void run_table(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const Corpus train = load_train(ws, cfg);
  const auto alignments = load_alignments(ws, train.size());
  const auto full = build_phrase_table(train, alignments, kMaxSrcPhrase, cfg.max_target_phrase);
  const auto pruned = prune_table(full, cfg.prune_threshold);
  log << "phrase table: " << full.size() << " entries, " << pruned.size() << " after pruning at count "
      << cfg.prune_threshold << "\n";
  ws.write(kFullTable, full.to_moses());
  ws.write(kPrunedTable, pruned.to_moses());
}

void run_augment(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const Corpus train = load_train(ws, cfg);
  const auto alignments = load_alignments(ws, train.size());
  const auto table = load_pruned_table(ws);
  const auto index = build_match_index(train, table, alignments);
  SamplingOptions opts;
  opts.k1 = cfg.k1;
  opts.k2 = cfg.k2;
  opts.seed = cfg.seed + kAugmentSeed;
  const auto augmented = sample_augmented(index, train, opts);
  log << "augmented: " << augmented.size() << " code-switched pairs from " << index.single.size()
      << " entries and " << index.combos.size() << " combinations\n";
  ws.write(kAugmented, to_jsonl(augmented));
  ws.write(kCodeSwitched, lines_text(code_switched_lines(augmented)));

  const auto placeholder =
      make_placeholder_training_corpus(train, table, alignments, cfg.placeholder_ratio, cfg.seed + kPlaceholderSeed);
  ws.write(kPlaceholderSrc, lines_text(source_lines(placeholder)));
  ws.write(kPlaceholderTgt, lines_text(target_lines(placeholder)));
}

Corpus training_corpus(const Workspace& ws, const PipelineConfig& cfg, TrainingData data) {
  switch (data) {
    case TrainingData::Original:
      return load_train(ws, cfg);
    case TrainingData::Augmented: {
      const Corpus train = load_train(ws, cfg);
      ws.require(kAugmented, Stage::Augment);
      return build_training_set(train, from_jsonl(ws.read(kAugmented)));
    }
    case TrainingData::Placeholder:
      ws.require(kPlaceholderSrc, Stage::Augment);
      ws.require(kPlaceholderTgt, Stage::Augment);
      return ws.read_corpus(kPlaceholderSrc, kPlaceholderTgt, static_cast<std::size_t>(cfg.max_sentence_len));
  }
  throw Error("unknown training data kind");
}

void run_train(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  // Check every prerequisite before spending time on the first system.
  for (const auto& s : cfg.systems) training_corpus(ws, cfg, s.data);
  for (const auto& s : cfg.systems) {
    const Corpus corpus = training_corpus(ws, cfg, s.data);
    ModelConfig mc = cfg.model;
    mc.vocab_mode = s.mode;
    const auto seed = system_seed(cfg, s);
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    std::string epochs = "epoch\tstep\tmean_loss\n";
    // The checkpoint is rewritten after every epoch so an interrupted run keeps its latest weights.
    Model model = train_new_model(corpus, mc, seed, &report, [&](const Model& m, const EpochReport& e) {
      epochs += std::to_string(e.epoch) + "\t" + std::to_string(e.step) + "\t" + fixed(e.mean_loss, 6) + "\n";
      CheckpointMeta partial;
      partial.step = e.step;
      partial.epoch = e.epoch;
      partial.seed = seed;
      partial.final_loss = e.mean_loss;
      save_checkpoint(m, ws.path(model_prefix(s)), partial);
    });
    CheckpointMeta meta;
    meta.step = report.steps;
    meta.epoch = static_cast<int>(report.epochs.size());
    meta.seed = seed;
    meta.final_loss = report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss;
    save_checkpoint(model, ws.path(model_prefix(s)), meta);
    ws.write(model_prefix(s) + ".epochs.tsv", epochs);
    log << "trained " << s.name << " (" << to_string(s.mode) << ", " << to_string(s.data) << " data, "
        << corpus.size() << " pairs): " << report.steps << " steps, final epoch loss " << meta.final_loss << ", "
        << fixed(seconds_since(t0), 1) << "s\n";
  }
}

std::vector<ConstraintSet> test_constraints(const Corpus& test, const PhraseTable& table, const PipelineConfig& cfg) {
  std::vector<ConstraintSet> sets;
  for (std::size_t k = 0; k < test.size(); ++k) {
    sets.push_back(sample_constraints_from_reference(test[k], table, cfg.constraints_per_sentence,
                                                     cfg.seed + kConstraintSeed + 7919ull * k));
  }
  return sets;
}

std::vector<ConstraintSet> as_sets(const std::vector<std::vector<LexiconEntry>>& applied) {
  std::vector<ConstraintSet> out;
  for (const auto& a : applied) {
    ConstraintSet cs;
    for (const auto& e : a) cs.add(e);
    out.push_back(cs);
  }
  return out;
}

/// Tags constrained spans, decodes, then restores tags. Unknown tags in the
/// output are dropped (counted) rather than aborting the whole test set.
void translate_placeholder(const Workspace& ws, const Model& model, const SystemSpec& s, const Corpus& test,
                           const std::vector<ConstraintSet>& sets, const BeamOptions& beam, std::ostream& log) {
  std::vector<std::string> hyps;
  std::vector<std::vector<LexiconEntry>> applied;
  std::string audit;
  std::size_t unknown = 0, failures = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto tagged = tag_source(test[k].source, sets[k]);
    applied.push_back(apply_constraints(test[k].source, sets[k]).applied);
    const auto hyp = beam_search(model, tagged.source, beam);
    std::vector<std::string> kept;
    for (const auto& w : hyp.tokens) {
      const int id = parse_tag(w);
      if (id != 0 && !tagged.tags.count(id)) {
        ++unknown;
        continue;
      }
      kept.push_back(w);
    }
    const auto restored = untag_output(kept, tagged.tags);
    failures += restored.failures;
    hyps.push_back(join(restored.tokens));
    nlohmann::json j;
    j["input"] = join(tagged.source);
    j["raw"] = join(hyp.tokens);
    j["hypothesis"] = hyps.back();
    j["score"] = hyp.score();
    j["finished"] = hyp.finished;
    j["tag_failures"] = restored.failures;
    audit += j.dump() + "\n";
  }
  if (unknown > 0 || failures > 0) {
    log << s.name << ": " << failures << " tags missing from output, " << unknown << " unknown tags dropped\n";
  }
  ws.write("translate/" + s.name + ".constrained.hyp", lines_text(hyps));
  ws.write("translate/" + s.name + ".applied.jsonl", constraints_to_jsonl(as_sets(applied)));
  ws.write("translate/" + s.name + ".audit.jsonl", audit);
}

void run_translate(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const Corpus test = load_test(ws, cfg);
  const auto table = load_pruned_table(ws);
  for (const auto& s : cfg.systems) ws.require(model_prefix(s) + ".json", Stage::Train);
  const auto sets = test_constraints(test, table, cfg);
  ws.write(kTestConstraints, constraints_to_jsonl(sets));

  std::vector<Sentence> inputs;
  for (const auto& p : test) inputs.push_back(p.source);
  for (const auto& s : cfg.systems) {
    const Model model = load_system(ws, s);
    const auto t0 = std::chrono::steady_clock::now();
    const auto plain = translate_corpus(model, inputs, nullptr, cfg.beam);
    ws.write("translate/" + s.name + ".plain.hyp", lines_text(hypothesis_lines(plain)));
    if (s.data == TrainingData::Placeholder) {
      translate_placeholder(ws, model, s, test, sets, cfg.beam, log);
    } else {
      const auto constrained = translate_corpus(model, inputs, &sets, cfg.beam);
      std::vector<std::vector<LexiconEntry>> applied;
      for (const auto& r : constrained) applied.push_back(r.applied);
      ws.write("translate/" + s.name + ".constrained.hyp", lines_text(hypothesis_lines(constrained)));
      ws.write("translate/" + s.name + ".applied.jsonl", constraints_to_jsonl(as_sets(applied)));
      ws.write("translate/" + s.name + ".audit.jsonl", audit_jsonl(constrained));
    }
    log << "translated test set with " << s.name << " in " << fixed(seconds_since(t0), 1) << "s\n";
  }
}

std::vector<Words> read_words(const std::string& path) {
  std::vector<Words> out;
  for (const auto& l : read_lines(path)) out.push_back(split_words(l));
  return out;
}

void run_evaluate(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  ws.require(kTestTgt, Stage::Synth);
  const auto refs = read_words(ws.path(kTestTgt));
  std::map<std::string, double> plain_bleu;
  std::string tsv = "system\tmode\tdata\tbleu_plain\tbleu_constrained\tcsr\tapplied\tcopied\n";
  for (const auto& s : cfg.systems) {
    const std::string stem = "translate/" + s.name;
    for (const char* ext : {".plain.hyp", ".constrained.hyp", ".applied.jsonl"}) {
      ws.require(stem + ext, Stage::Translate);
    }
    const auto plain = read_words(ws.path(stem + ".plain.hyp"));
    const auto constrained = read_words(ws.path(stem + ".constrained.hyp"));
    std::vector<std::vector<LexiconEntry>> applied;
    for (const auto& cs : constraints_from_jsonl(ws.read(stem + ".applied.jsonl"))) applied.push_back(cs.entries);
    if (plain.size() != refs.size() || constrained.size() != refs.size() || applied.size() != refs.size()) {
      throw Error("translation outputs of " + s.name + " do not match the test set; rerun 'translate'");
    }
    const double bp = corpus_bleu(plain, refs);
    const double bc = corpus_bleu(constrained, refs);
    const auto csr = copy_success_rate(constrained, applied);
    plain_bleu[s.name] = bp;
    tsv += s.name + "\t" + to_string(s.mode) + "\t" + to_string(s.data) + "\t" + fixed(bp) + "\t" + fixed(bc) + "\t" +
           fixed(csr.rate) + "\t" + std::to_string(csr.applied) + "\t" + std::to_string(csr.copied) + "\n";
    log << s.name << ": BLEU " << fixed(bp, 2) << " plain, " << fixed(bc, 2) << " constrained, CSR "
        << fixed(csr.rate) << " (" << csr.copied << "/" << csr.applied << ")\n";
  }
  ws.write(kEvalReport, tsv);

  std::string reg = "baseline\tsystem\tbleu_baseline\tbleu_system\tdifference\n";
  if (!cfg.baseline.empty()) {
    const double b = plain_bleu.at(cfg.baseline);
    for (const auto& s : cfg.systems) {
      if (s.name == cfg.baseline) continue;
      reg += cfg.baseline + "\t" + s.name + "\t" + fixed(b) + "\t" + fixed(plain_bleu[s.name]) + "\t" +
             fixed(plain_bleu[s.name] - b) + "\n";
    }
  }
  ws.write(kRegressionReport, reg);
}

void run_sweep(const Workspace& ws, const PipelineConfig& cfg, std::ostream& log) {
  const Corpus test = load_test(ws, cfg);
  const auto table = load_pruned_table(ws);
  std::vector<Model> models;
  std::vector<std::string> names;
  for (const auto& s : cfg.systems) {
    if (s.data == TrainingData::Placeholder) continue;  // tags, not code-switching
    models.push_back(load_system(ws, s));
    names.push_back(s.name);
  }
  std::vector<NamedModel> systems;
  for (std::size_t i = 0; i < models.size(); ++i) systems.push_back({names[i], &models[i]});
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = replacement_sweep(test, table, systems, cfg.sweep_max, cfg.seed + kSweepSeed, cfg.beam);
  ws.write(kSweepReport, sweep_tsv(rows));
  log << "sweep n=0.." << cfg.sweep_max << " over " << systems.size() << " systems in "
      << fixed(seconds_since(t0), 1) << "s\n";
}

}  // namespace

Stage stage_from_string(const std::string& s) {
  for (const auto& [st, name] : stage_names()) {
    if (name == s) return st;
  }
  throw Error("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
  for (const auto& [st, name] : stage_names()) {
    if (st == s) return name;
  }
  return "?";
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> order = {Stage::Synth,     Stage::Align,    Stage::Table, Stage::Augment,
                                           Stage::Train,     Stage::Translate, Stage::Evaluate, Stage::Sweep};
  return order;
}

TrainingData training_data_from_string(const std::string& s) {
  if (s == "original") return TrainingData::Original;
  if (s == "augmented") return TrainingData::Augmented;
  if (s == "placeholder") return TrainingData::Placeholder;
  throw Error("unknown training data '" + s + "' (expected original, augmented or placeholder)");
}

std::string to_string(TrainingData d) {
  switch (d) {
    case TrainingData::Original: return "original";
    case TrainingData::Augmented: return "augmented";
    case TrainingData::Placeholder: return "placeholder";
  }
  return "?";
}

SystemSpec parse_system(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() != 3 || parts[0].empty()) {
    throw Error("system must look like name:vocab_mode:data, got '" + text + "'");
  }
  return SystemSpec{parts[0], vocab_mode_from_string(parts[1]), training_data_from_string(parts[2])};
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& c) {
  PipelineConfig p;
  p.work_dir = c.get("run.work_dir", p.work_dir);
  p.seed = static_cast<std::uint64_t>(c.get_int("run.seed", static_cast<long long>(p.seed)));

  auto size = [&](const std::string& key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw Error("config key " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  p.synth.train_size = size("data.train_size", p.synth.train_size);
  p.synth.test_size = size("data.test_size", p.synth.test_size);
  p.synth.vocab_size = size("data.vocab_size", p.synth.vocab_size);
  p.synth.min_len = size("data.min_len", p.synth.min_len);
  p.synth.max_len = size("data.max_len", p.synth.max_len);
  p.synth.modifier_fraction = c.get_double("data.modifier_fraction", p.synth.modifier_fraction);
  p.synth.identity = c.get_bool("data.identity", p.synth.identity);
  p.train_src = c.get("data.train_src", "");
  p.train_tgt = c.get("data.train_tgt", "");
  p.test_src = c.get("data.test_src", "");
  p.test_tgt = c.get("data.test_tgt", "");
  p.lexicon = c.get("data.lexicon", "");
  p.max_sentence_len = static_cast<int>(c.get_int("data.max_sentence_len", p.max_sentence_len));

  p.align_iterations = static_cast<int>(c.get_int("align.iterations", p.align_iterations));
  p.max_target_phrase = static_cast<int>(c.get_int("table.max_target_phrase", p.max_target_phrase));
  p.prune_threshold = size("table.prune_threshold", p.prune_threshold);
  p.k1 = size("augment.k1", p.k1);
  p.k2 = size("augment.k2", p.k2);
  p.placeholder_ratio = c.get_double("augment.placeholder_ratio", p.placeholder_ratio);

  // Desk-scale training schedule; the architecture defaults stay as declared.
  ModelConfig& m = p.model;
  m.learning_rate = 1e-3;
  m.max_steps = 4000;
  m.epochs = 100;
  m.n_layers = static_cast<int>(c.get_int("model.n_layers", m.n_layers));
  m.d_model = static_cast<int>(c.get_int("model.d_model", m.d_model));
  m.n_heads = static_cast<int>(c.get_int("model.n_heads", m.n_heads));
  m.d_ffn = static_cast<int>(c.get_int("model.d_ffn", m.d_ffn));
  m.activation = activation_from_string(c.get("model.activation", to_string(m.activation)));
  m.confidence = c.get_double("model.confidence", m.confidence);
  m.dropout = c.get_double("model.dropout", m.dropout);
  m.max_len = static_cast<int>(c.get_int("model.max_len", m.max_len));
  m.src_vocab_size = size("model.src_vocab_size", m.src_vocab_size);
  m.tgt_vocab_size = size("model.tgt_vocab_size", m.tgt_vocab_size);
  m.learning_rate = c.get_double("train.learning_rate", m.learning_rate);
  m.warmup_steps = static_cast<int>(c.get_int("train.warmup_steps", m.warmup_steps));
  m.adam_beta1 = c.get_double("train.adam_beta1", m.adam_beta1);
  m.adam_beta2 = c.get_double("train.adam_beta2", m.adam_beta2);
  m.adam_eps = c.get_double("train.adam_eps", m.adam_eps);
  m.clip_norm = c.get_double("train.clip_norm", m.clip_norm);
  m.batch_size = static_cast<int>(c.get_int("train.batch_size", m.batch_size));
  m.epochs = static_cast<int>(c.get_int("train.epochs", m.epochs));
  m.max_steps = static_cast<int>(c.get_int("train.max_steps", m.max_steps));

  const std::vector<std::string> default_systems = {
      "baseline:shared_pointer:original", "merged:merged:augmented", "shared:shared:augmented",
      "pointer:shared_pointer:augmented", "placeholder:shared:placeholder"};
  for (const auto& s : c.get_list("train.systems", default_systems)) p.systems.push_back(parse_system(s));
  p.baseline = c.get("train.baseline", p.systems.empty() ? "" : p.systems.front().name);

  p.beam.beam_size = static_cast<int>(c.get_int("decode.beam", p.beam.beam_size));
  p.beam.max_len = static_cast<int>(c.get_int("decode.max_len", p.beam.max_len));
  p.constraints_per_sentence = size("eval.constraints_per_sentence", p.constraints_per_sentence);
  p.sweep_max = static_cast<int>(c.get_int("eval.sweep_max", p.sweep_max));
  p.validate();
  return p;
}

void PipelineConfig::validate() const {
  if (work_dir.empty()) throw Error("run.work_dir must not be empty");
  const int given = !train_src.empty() + !train_tgt.empty() + !test_src.empty() + !test_tgt.empty();
  if (given != 0 && given != 4) throw Error("data.train_src/train_tgt/test_src/test_tgt must be given together");
  if (align_iterations < 1) throw Error("align.iterations must be at least 1");
  if (max_target_phrase < 1) throw Error("table.max_target_phrase must be at least 1");
  if (prune_threshold < 1) throw Error("table.prune_threshold must be at least 1");
  if (placeholder_ratio < 0.0 || placeholder_ratio > 1.0) throw Error("augment.placeholder_ratio must be in [0, 1]");
  if (beam.beam_size < 1) throw Error("decode.beam must be at least 1");
  if (sweep_max < 0) throw Error("eval.sweep_max must be non-negative");
  if (systems.empty()) throw Error("train.systems must list at least one system");
  model.validate();
  for (std::size_t i = 0; i < systems.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (systems[i].name == systems[j].name) throw Error("duplicate system name " + systems[i].name);
    }
  }
  if (!baseline.empty()) system(baseline);
}

const SystemSpec& PipelineConfig::system(const std::string& name) const {
  for (const auto& s : systems) {
    if (s.name == name) return s;
  }
  throw Error("no system named '" + name + "'");
}

std::vector<std::string> stage_outputs(Stage stage, const PipelineConfig& cfg) {
  switch (stage) {
    case Stage::Synth: return {kTrainSrc, kTrainTgt, kTestSrc, kTestTgt, kLexicon};
    case Stage::Align: return {kFwdTable, kRevTable, kAlignments};
    case Stage::Table: return {kFullTable, kPrunedTable};
    case Stage::Augment: return {kAugmented, kCodeSwitched, kPlaceholderSrc, kPlaceholderTgt};
    case Stage::Train: {
      std::vector<std::string> out;
      for (const auto& s : cfg.systems) {
        for (const char* ext : {".json", ".bin", ".src.vocab", ".tgt.vocab", ".epochs.tsv"}) {
          out.push_back(model_prefix(s) + ext);
        }
      }
      return out;
    }
    case Stage::Translate: {
      std::vector<std::string> out = {kTestConstraints};
      for (const auto& s : cfg.systems) {
        for (const char* ext : {".plain.hyp", ".constrained.hyp", ".applied.jsonl", ".audit.jsonl"}) {
          out.push_back("translate/" + s.name + ext);
        }
      }
      return out;
    }
    case Stage::Evaluate: return {kEvalReport, kRegressionReport};
    case Stage::Sweep: return {kSweepReport};
    case Stage::All: {
      std::vector<std::string> out;
      for (Stage s : pipeline_stages()) {
        const auto part = stage_outputs(s, cfg);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
  }
  return {};
}

void run_stage(Stage stage, const PipelineConfig& cfg, std::ostream& log) {
  if (stage == Stage::All) {
    for (Stage s : pipeline_stages()) run_stage(s, cfg, log);
    return;
  }
  cfg.validate();
  const Workspace ws(cfg);
  log << "== " << to_string(stage) << "\n";
  switch (stage) {
    case Stage::Synth: run_synth(ws, cfg, log); break;
    case Stage::Align: run_align(ws, cfg, log); break;
    case Stage::Table: run_table(ws, cfg, log); break;
    case Stage::Augment: run_augment(ws, cfg, log); break;
    case Stage::Train: run_train(ws, cfg, log); break;
    case Stage::Translate: run_translate(ws, cfg, log); break;
    case Stage::Evaluate: run_evaluate(ws, cfg, log); break;
    case Stage::Sweep: run_sweep(ws, cfg, log); break;
    case Stage::All: break;
  }
  update_manifest(ws, cfg, stage);
}

}  // namespace csmt
