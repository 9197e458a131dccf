#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csmt/config.hpp"
#include "csmt/decoding.hpp"
#include "csmt/model.hpp"
#include "csmt/synthetic.hpp"

namespace csmt {

enum class Stage { Synth, Align, Table, Augment, Train, Translate, Evaluate, Sweep, All };

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);
/// Stages in execution order, `All` excluded.
const std::vector<Stage>& pipeline_stages();

enum class TrainingData { Original, Augmented, Placeholder };

TrainingData training_data_from_string(const std::string& s);
std::string to_string(TrainingData d);

/// One trained system, written `name:vocab_mode:data` in the config.
struct SystemSpec {
  std::string name;
  VocabMode mode = VocabMode::SharedPointer;
  TrainingData data = TrainingData::Augmented;
};

SystemSpec parse_system(const std::string& text);

struct PipelineConfig {
  std::string work_dir = "work";
  std::uint64_t seed = 1;

  // Data: the synthetic task unless all four corpus paths are given.
  SyntheticConfig synth;
  std::string train_src, train_tgt, test_src, test_tgt, lexicon;
  int max_sentence_len = 128;

  int align_iterations = 5;
  int max_target_phrase = 5;
  std::size_t prune_threshold = 10;
  std::size_t k1 = 100;
  std::size_t k2 = 30;
  double placeholder_ratio = 0.05;

  ModelConfig model;  // per-system vocab_mode overrides model.vocab_mode
  std::vector<SystemSpec> systems;
  std::string baseline;  // system used for the regression report

  BeamOptions beam;
  std::size_t constraints_per_sentence = 1;
  int sweep_max = 7;

  /// Desk-scale defaults; every value can be overridden by `cfg`.
  static PipelineConfig from(const KeyValueConfig& cfg);
  void validate() const;
  const SystemSpec& system(const std::string& name) const;
};

/// Runs one stage (or all of them), writing artifacts under work_dir and
/// refreshing work_dir/manifest.json. Throws PreconditionError when an
/// earlier stage has not been run.
void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log);

/// Relative paths of the artifacts a stage produces.
std::vector<std::string> stage_outputs(Stage stage, const PipelineConfig& config);

}  // namespace csmt
