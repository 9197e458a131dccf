#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csmt/model.hpp"

namespace csmt {

/// Adam with the inverse square-root warmup schedule
/// lr(step) = base * min(step / warmup, sqrt(warmup / step)).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ag::Parameter*> params, const ModelConfig& config);

  double learning_rate(long step) const;
  /// Clips, updates, and returns the pre-clip gradient norm.
  double step();
  long steps_taken() const { return step_; }

 private:
  std::vector<ag::Parameter*> params_;
  std::vector<ag::Matrix> m_, v_;
  ModelConfig config_;
  long step_ = 0;
};

struct EpochReport {
  int epoch = 0;
  long step = 0;
  double mean_loss = 0.0;
};

struct TrainReport {
  std::vector<double> step_losses;
  std::vector<EpochReport> epochs;
  long steps = 0;
};

using EpochCallback = std::function<void(const Model&, const EpochReport&)>;

/// Trains in place. Deterministic given `seed`; throws on a non-finite loss.
TrainReport train(Model& model, const Corpus& corpus, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

/// Builds vocabularies, initialises and trains a model.
Model train_new_model(const Corpus& corpus, const ModelConfig& config, std::uint64_t seed,
                      TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t coordinates_checked = 0;
};

/// Central finite differences against the analytic gradient on
/// `samples_per_tensor` random coordinates of every parameter tensor.
/// `tamper` may modify analytic gradients before comparison (harness tests).
GradientCheckReport gradient_check(Model& model, const std::vector<Example>& batch, double epsilon,
                                   int samples_per_tensor, std::uint64_t seed,
                                   const std::function<void(Model&)>& tamper = {});

/// |a - n| / max(|a|, |n|), or 0 when both are below `floor`.
double relative_error(double analytic, double numeric, double floor = 1e-7);

// Checkpoints -----------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  long step = 0;
  int epoch = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
};

/// Writes `<prefix>.bin` (tensors), `<prefix>.src.vocab`, `<prefix>.tgt.vocab`
/// and `<prefix>.json` (version, config, vocab and blob hashes, meta).
void save_checkpoint(const Model& model, const std::string& prefix, const CheckpointMeta& meta);
Model load_checkpoint(const std::string& prefix, CheckpointMeta* meta = nullptr);

std::string serialize_tensors(const Model& model);

}  // namespace csmt
