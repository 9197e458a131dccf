#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csmt/autograd.hpp"
#include "csmt/corpus_io.hpp"
#include "json.hpp"

namespace csmt {

class Rng;

/// How code-switched source tokens are embedded and how output is produced.
///  merged:          one source table over source and target-language surfaces
///  shared:          TGT-tagged source tokens use rows of the target table
///  shared_pointer:  shared, plus the copy/generate mixture over source positions
enum class VocabMode { Merged, Shared, SharedPointer };
enum class Activation { Swish, Relu };

std::string to_string(VocabMode m);
VocabMode vocab_mode_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ffn = 256;
  VocabMode vocab_mode = VocabMode::SharedPointer;
  Activation activation = Activation::Swish;
  double confidence = 0.9;  // label smoothing: mass on the gold token
  double dropout = 0.1;
  int max_len = 128;
  std::size_t src_vocab_size = 50000;
  std::size_t tgt_vocab_size = 50000;

  // Optimisation.
  double learning_rate = 3e-4;
  int warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 5.0;  // 0 disables
  int batch_size = 32;
  int epochs = 10;
  int max_steps = 0;  // 0: run all epochs

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct AttentionWeights {
  ag::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerNormWeights {
  ag::Parameter gain, bias;
};

struct FeedForwardWeights {
  ag::Parameter w1, b1, w2, b2;
};

struct EncoderLayerWeights {
  AttentionWeights self_attn;
  LayerNormWeights norm1;
  FeedForwardWeights ffn;
  LayerNormWeights norm2;
};

struct DecoderLayerWeights {
  AttentionWeights self_attn;
  LayerNormWeights norm1;
  AttentionWeights cross_attn;
  LayerNormWeights norm2;
  FeedForwardWeights ffn;
  LayerNormWeights norm3;
};

struct ModelParameters {
  ag::Parameter src_embed;
  ag::Parameter tgt_embed;
  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;
  ag::Parameter out_proj;    // d_model x |V_tgt|
  ag::Parameter gate_ctx;    // d_model x 1, applied to the context vector
  ag::Parameter gate_state;  // d_model x 1, applied to the decoder state
  ag::Parameter gate_bias;   // 1 x 1
};

/// A source sentence resolved against the model's vocabularies.
struct PreparedSource {
  std::vector<std::pair<int, int>> embed_refs;  // (0 = source table, 1 = target table, row)
  /// Extended-vocabulary id of each position: target ids first, then
  /// |V_tgt| + source id, then one id per distinct out-of-vocabulary surface.
  std::vector<int> types;
  std::vector<std::string> oov_surfaces;
  std::size_t length() const { return embed_refs.size(); }
};

/// One training pair, numericalised.
struct Example {
  PreparedSource source;
  std::vector<int> decoder_input;  // BOS y_1 .. y_T (target ids)
  std::vector<int> gold;           // y_1 .. y_T EOS (extended ids)
};

struct EncoderOutput {
  PreparedSource source;
  ag::Matrix hidden;  // m x d_model, last encoder layer
};

struct DecoderStepState {
  ag::RowVector hidden;   // s_t of the last decoder layer
  ag::RowVector weights;  // head-averaged last-layer cross-attention over source positions
  ag::RowVector context;  // sum_i weights_i * h_i
};

class Model {
 public:
  Model(ModelConfig config, Vocabulary src_vocab, Vocabulary tgt_vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& src_vocab() const { return src_vocab_; }
  const Vocabulary& tgt_vocab() const { return tgt_vocab_; }
  ModelParameters& params() { return params_; }
  const ModelParameters& params() const { return params_; }
  bool pointer() const { return config_.vocab_mode == VocabMode::SharedPointer; }

  /// Every trainable tensor, in a fixed order.
  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;

  PreparedSource prepare_source(const Sentence& src) const;
  Example make_example(const SentencePair& pair) const;
  /// Width of the output distribution for this source.
  int extended_size(const PreparedSource& src) const;
  std::string surface_of(int extended_id, const PreparedSource& src) const;
  /// Target-table row fed back to the decoder for an emitted extended id.
  int decoder_input_id(int extended_id, const PreparedSource& src) const;

  /// Mean label-smoothed loss of a batch (a scalar node on `tape`).
  ag::Var loss(ag::Tape& tape, const std::vector<Example>& batch, bool training, Rng* rng) const;

  EncoderOutput encode(const PreparedSource& src) const;
  /// `prefix` holds extended ids and starts with BOS.
  DecoderStepState decode_step(const std::vector<int>& prefix, const EncoderOutput& enc) const;
  /// Distribution over the extended vocabulary. `gate_override` forces g.
  std::vector<double> output_distribution(const DecoderStepState& state, const PreparedSource& src,
                                          std::optional<double> gate_override = std::nullopt) const;
  /// Predict/copy gate g for a state (pointer mode).
  double gate(const DecoderStepState& state) const;

  /// decode_step invocations since construction or the last reset.
  std::size_t decode_step_calls() const { return decode_step_calls_; }
  void reset_decode_step_calls() const { decode_step_calls_ = 0; }

 private:
  struct Stack;
  ModelConfig config_;
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  ModelParameters params_;
  mutable std::size_t decode_step_calls_ = 0;
};

/// Builds the vocabularies a model of this mode needs from a training corpus.
std::pair<Vocabulary, Vocabulary> build_model_vocabularies(const Corpus& corpus,
                                                           const ModelConfig& config);

/// Fixed sinusoidal position encodings, `length` x d.
ag::Matrix positional_encoding(int length, int d);

}  // namespace csmt
