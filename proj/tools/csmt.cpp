// Command-line driver: pipeline stages plus standalone decode and bleu.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csmt/config.hpp"
#include "csmt/constraints.hpp"
#include "csmt/decoding.hpp"
#include "csmt/error.hpp"
#include "csmt/evaluation.hpp"
#include "csmt/io.hpp"
#include "csmt/pipeline.hpp"
#include "csmt/trainer.hpp"

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitPrecondition = 2;

struct StageArgs {
  std::string config;
  std::vector<std::string> overrides;
  long long seed = -1;
};

csmt::PipelineConfig load_config(const StageArgs& a) {
  csmt::KeyValueConfig kv;
  if (!a.config.empty()) kv = csmt::KeyValueConfig::load(a.config);
  for (const auto& o : a.overrides) kv.set_override(o);
  if (a.seed >= 0) kv.set("run.seed", std::to_string(a.seed));
  return csmt::PipelineConfig::from(kv);
}

struct DecodeArgs {
  std::string model, input, output, constraints, audit;
  int beam = 5;
  int max_len = 0;
};

void run_decode(const DecodeArgs& a) {
  const auto model = csmt::load_checkpoint(a.model);
  std::vector<csmt::Sentence> inputs;
  for (const auto& line : csmt::read_lines(a.input)) inputs.push_back(csmt::tokenize(line));
  std::vector<csmt::ConstraintSet> sets;
  if (!a.constraints.empty()) {
    sets = csmt::constraints_from_jsonl(csmt::read_file(a.constraints));
    if (sets.size() != inputs.size()) {
      throw csmt::Error("constraint file has " + std::to_string(sets.size()) + " lines, input has " +
                        std::to_string(inputs.size()));
    }
  }
  csmt::BeamOptions opts;
  opts.beam_size = a.beam;
  opts.max_len = a.max_len;
  const auto records = csmt::translate_corpus(model, inputs, sets.empty() ? nullptr : &sets, opts);
  const auto lines = csmt::hypothesis_lines(records);
  if (a.output.empty() || a.output == "-") {
    for (const auto& l : lines) std::cout << l << "\n";
  } else {
    csmt::write_lines(a.output, lines);
  }
  if (!a.audit.empty()) csmt::write_file_atomic(a.audit, csmt::audit_jsonl(records));
}

void run_bleu(const std::string& hyp_path, const std::vector<std::string>& ref_paths) {
  auto words = [](const std::string& path) {
    std::vector<csmt::Words> out;
    for (const auto& l : csmt::read_lines(path)) out.push_back(csmt::split_words(l));
    return out;
  };
  const auto hyps = words(hyp_path);
  std::vector<std::vector<csmt::Words>> refs(hyps.size());
  for (const auto& path : ref_paths) {
    const auto r = words(path);
    if (r.size() != hyps.size()) throw csmt::Error(path + ": line count differs from the hypothesis file");
    for (std::size_t i = 0; i < r.size(); ++i) refs[i].push_back(r[i]);
  }
  const auto st = csmt::bleu_stats(hyps, refs);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "BLEU = " << st.score() << " (hyp_len " << st.hyp_len << ", ref_len " << st.ref_len << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Code-switched constrained translation toolkit"};
  app.require_subcommand(1);

  StageArgs stage_args;
  std::string chosen_stage;
  for (const char* name : {"synth", "align", "table", "augment", "train", "translate", "evaluate", "sweep", "all"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sub->add_option("--config", stage_args.config, "pipeline config file")->check(CLI::ExistingFile);
    sub->add_option("--set", stage_args.overrides, "override a config key (section.key=value)");
    sub->add_option("--seed", stage_args.seed, "base seed, overrides run.seed");
    sub->callback([&chosen_stage, name] { chosen_stage = name; });
  }

  DecodeArgs dec;
  auto* decode = app.add_subcommand("decode", "translate a file with a trained checkpoint");
  decode->add_option("--model", dec.model, "checkpoint prefix (without .json)")->required();
  decode->add_option("--input", dec.input, "tokenized source, one sentence per line")->required();
  decode->add_option("--output", dec.output, "hypothesis file (default stdout)");
  decode->add_option("--constraints", dec.constraints, "JSON lines of [[src, tgt], ...] per sentence");
  decode->add_option("--audit", dec.audit, "write per-sentence JSON audit records");
  decode->add_option("--beam", dec.beam, "beam size")->check(CLI::PositiveNumber);
  decode->add_option("--max-len", dec.max_len, "maximum output length (0: 2 * source + 5)");

  std::string hyp;
  std::vector<std::string> refs;
  auto* bleu = app.add_subcommand("bleu", "corpus BLEU-4 of a hypothesis file");
  bleu->add_option("hyp", hyp, "hypothesis file")->required();
  bleu->add_option("refs", refs, "one or more reference files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; usage errors share the precondition code.
    return app.exit(e) == 0 ? 0 : kExitPrecondition;
  }

  try {
    if (decode->parsed()) {
      run_decode(dec);
    } else if (bleu->parsed()) {
      run_bleu(hyp, refs);
    } else {
      const auto cfg = load_config(stage_args);
      csmt::run_stage(csmt::stage_from_string(chosen_stage), cfg, std::cerr);
    }
  } catch (const csmt::PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
