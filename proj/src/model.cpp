#include "csmt/model.hpp"

#include <cmath>
#include <map>

#include "csmt/error.hpp"
#include "csmt/rng.hpp"

namespace csmt {

using ag::Matrix;
using ag::Parameter;
using ag::Segments;
using ag::Tape;
using ag::Var;

std::string to_string(VocabMode m) {
  switch (m) {
    case VocabMode::Merged: return "merged";
    case VocabMode::Shared: return "shared";
    case VocabMode::SharedPointer: return "shared_pointer";
  }
  return "?";
}

VocabMode vocab_mode_from_string(const std::string& s) {
  if (s == "merged") return VocabMode::Merged;
  if (s == "shared") return VocabMode::Shared;
  if (s == "shared_pointer") return VocabMode::SharedPointer;
  throw Error("unknown vocab_mode: " + s);
}

std::string to_string(Activation a) { return a == Activation::Swish ? "swish" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "swish") return Activation::Swish;
  if (s == "relu") return Activation::Relu;
  throw Error("unknown activation: " + s);
}

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ffn < 1) throw Error("model dimensions must be positive");
  if (d_model % n_heads != 0) throw Error("d_model must be divisible by n_heads");
  if (!(confidence > 0.0 && confidence <= 1.0)) throw Error("confidence must be in (0, 1]");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
  if (max_len < 1) throw Error("max_len must be positive");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (warmup_steps < 1) throw Error("warmup_steps must be positive");
  if (src_vocab_size < 4 || tgt_vocab_size < 4) throw Error("vocabulary sizes must be >= 4");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_layers", n_layers},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"d_ffn", d_ffn},
          {"vocab_mode", to_string(vocab_mode)},
          {"activation", to_string(activation)},
          {"confidence", confidence},
          {"dropout", dropout},
          {"max_len", max_len},
          {"src_vocab_size", src_vocab_size},
          {"tgt_vocab_size", tgt_vocab_size},
          {"learning_rate", learning_rate},
          {"warmup_steps", warmup_steps},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"clip_norm", clip_norm},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.d_ffn = j.at("d_ffn");
  c.vocab_mode = vocab_mode_from_string(j.at("vocab_mode"));
  c.activation = activation_from_string(j.at("activation"));
  c.confidence = j.at("confidence");
  c.dropout = j.at("dropout");
  c.max_len = j.at("max_len");
  c.src_vocab_size = j.at("src_vocab_size");
  c.tgt_vocab_size = j.at("tgt_vocab_size");
  c.learning_rate = j.at("learning_rate");
  c.warmup_steps = j.at("warmup_steps");
  c.adam_beta1 = j.at("adam_beta1");
  c.adam_beta2 = j.at("adam_beta2");
  c.adam_eps = j.at("adam_eps");
  c.clip_norm = j.at("clip_norm");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.max_steps = j.at("max_steps");
  c.validate();
  return c;
}

Matrix positional_encoding(int length, int d) {
  Matrix pe(length, d);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      pe(pos, i) = std::sin(pos * freq);
      if (i + 1 < d) pe(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Initialisation

namespace {

Matrix uniform(Rng& rng, int rows, int cols, double limit) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Parameter xavier(Rng& rng, std::string name, int fan_in, int fan_out) {
  return Parameter(std::move(name), uniform(rng, fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out))));
}

Parameter zeros(std::string name, int rows, int cols) {
  return Parameter(std::move(name), Matrix::Zero(rows, cols));
}

Parameter ones(std::string name, int cols) { return Parameter(std::move(name), Matrix::Ones(1, cols)); }

AttentionWeights init_attention(Rng& rng, const std::string& p, int d) {
  return {xavier(rng, p + ".wq", d, d), zeros(p + ".bq", 1, d), xavier(rng, p + ".wk", d, d),
          zeros(p + ".bk", 1, d),       xavier(rng, p + ".wv", d, d), zeros(p + ".bv", 1, d),
          xavier(rng, p + ".wo", d, d), zeros(p + ".bo", 1, d)};
}

LayerNormWeights init_norm(const std::string& p, int d) { return {ones(p + ".gain", d), zeros(p + ".bias", 1, d)}; }

FeedForwardWeights init_ffn(Rng& rng, const std::string& p, int d, int f) {
  return {xavier(rng, p + ".w1", d, f), zeros(p + ".b1", 1, f), xavier(rng, p + ".w2", f, d),
          zeros(p + ".b2", 1, d)};
}

void push_attention(std::vector<Parameter*>& out, AttentionWeights& a) {
  for (auto* p : {&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo}) out.push_back(p);
}
void push_norm(std::vector<Parameter*>& out, LayerNormWeights& n) {
  out.push_back(&n.gain);
  out.push_back(&n.bias);
}
void push_ffn(std::vector<Parameter*>& out, FeedForwardWeights& f) {
  for (auto* p : {&f.w1, &f.b1, &f.w2, &f.b2}) out.push_back(p);
}

}  // namespace

Model::Model(ModelConfig config, Vocabulary src_vocab, Vocabulary tgt_vocab, std::uint64_t seed)
    : config_(config), src_vocab_(std::move(src_vocab)), tgt_vocab_(std::move(tgt_vocab)) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.d_model;
  const double emb_limit = std::sqrt(3.0 / d);  // unit variance after the sqrt(d) scale
  params_.src_embed = Parameter("src_embed", uniform(rng, static_cast<int>(src_vocab_.size()), d, emb_limit));
  params_.tgt_embed = Parameter("tgt_embed", uniform(rng, static_cast<int>(tgt_vocab_.size()), d, emb_limit));
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    params_.encoder.push_back({init_attention(rng, p + ".self", d), init_norm(p + ".norm1", d),
                               init_ffn(rng, p + ".ffn", d, config_.d_ffn), init_norm(p + ".norm2", d)});
  }
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    params_.decoder.push_back({init_attention(rng, p + ".self", d), init_norm(p + ".norm1", d),
                               init_attention(rng, p + ".cross", d), init_norm(p + ".norm2", d),
                               init_ffn(rng, p + ".ffn", d, config_.d_ffn), init_norm(p + ".norm3", d)});
  }
  params_.out_proj = xavier(rng, "out_proj", d, static_cast<int>(tgt_vocab_.size()));
  if (pointer()) {
    params_.gate_ctx = xavier(rng, "gate_ctx", d, 1);
    params_.gate_state = xavier(rng, "gate_state", d, 1);
    params_.gate_bias = zeros("gate_bias", 1, 1);
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out{&params_.src_embed, &params_.tgt_embed};
  for (auto& l : params_.encoder) {
    push_attention(out, l.self_attn);
    push_norm(out, l.norm1);
    push_ffn(out, l.ffn);
    push_norm(out, l.norm2);
  }
  for (auto& l : params_.decoder) {
    push_attention(out, l.self_attn);
    push_norm(out, l.norm1);
    push_attention(out, l.cross_attn);
    push_norm(out, l.norm2);
    push_ffn(out, l.ffn);
    push_norm(out, l.norm3);
  }
  out.push_back(&params_.out_proj);
  if (pointer()) {
    out.push_back(&params_.gate_ctx);
    out.push_back(&params_.gate_state);
    out.push_back(&params_.gate_bias);
  }
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

// ---------------------------------------------------------------------------
// Vocabulary plumbing

std::pair<Vocabulary, Vocabulary> build_model_vocabularies(const Corpus& corpus, const ModelConfig& config) {
  std::vector<std::vector<std::string>> src, tgt;
  for (const auto& p : corpus) {
    std::vector<std::string> s;
    for (const auto& t : p.source) {
      if (config.vocab_mode == VocabMode::Merged || t.lang == Lang::Src) s.push_back(t.surface);
    }
    src.push_back(std::move(s));
    tgt.push_back(surfaces(p.target));
  }
  return {Vocabulary::build(src, config.src_vocab_size), Vocabulary::build(tgt, config.tgt_vocab_size)};
}

PreparedSource Model::prepare_source(const Sentence& src) const {
  PreparedSource out;
  const int vt = static_cast<int>(tgt_vocab_.size());
  const int vs = static_cast<int>(src_vocab_.size());
  std::map<std::string, int> oov;
  for (const auto& tok : src) {
    const bool via_target = tok.lang == Lang::Tgt && config_.vocab_mode != VocabMode::Merged;
    const auto& vocab = via_target ? tgt_vocab_ : src_vocab_;
    const bool known = vocab.contains(tok.surface);
    const int row = vocab.id_of(tok.surface);
    out.embed_refs.emplace_back(via_target ? 1 : 0, row);
    int type;
    if (known) {
      type = via_target ? row : vt + row;
    } else {
      auto [it, inserted] = oov.emplace(tok.surface, static_cast<int>(out.oov_surfaces.size()));
      if (inserted) out.oov_surfaces.push_back(tok.surface);
      type = vt + vs + it->second;
    }
    out.types.push_back(type);
  }
  return out;
}

int Model::extended_size(const PreparedSource& src) const {
  if (!pointer()) return static_cast<int>(tgt_vocab_.size());
  return static_cast<int>(tgt_vocab_.size() + src_vocab_.size() + src.oov_surfaces.size());
}

std::string Model::surface_of(int id, const PreparedSource& src) const {
  const int vt = static_cast<int>(tgt_vocab_.size());
  const int vs = static_cast<int>(src_vocab_.size());
  if (id < vt) return tgt_vocab_.surface_of(id);
  if (id < vt + vs) return src_vocab_.surface_of(id - vt);
  const auto k = static_cast<std::size_t>(id - vt - vs);
  return k < src.oov_surfaces.size() ? src.oov_surfaces[k] : tgt_vocab_.surface_of(Vocabulary::kUnk);
}

int Model::decoder_input_id(int id, const PreparedSource& src) const {
  if (id < static_cast<int>(tgt_vocab_.size())) return id;
  return tgt_vocab_.id_of(surface_of(id, src));
}

Example Model::make_example(const SentencePair& pair) const {
  Example ex;
  ex.source = prepare_source(pair.source);
  ex.decoder_input.push_back(Vocabulary::kBos);
  const int vt = static_cast<int>(tgt_vocab_.size());
  const int vs = static_cast<int>(src_vocab_.size());
  for (const auto& tok : pair.target) {
    int id = tgt_vocab_.id_of(tok.surface);
    ex.decoder_input.push_back(id);
    if (id == Vocabulary::kUnk && pointer()) {
      for (std::size_t k = 0; k < ex.source.oov_surfaces.size(); ++k) {
        if (ex.source.oov_surfaces[k] == tok.surface) id = vt + vs + static_cast<int>(k);
      }
    }
    ex.gold.push_back(id);
  }
  ex.gold.push_back(Vocabulary::kEos);
  return ex;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

Var P(Tape& t, const Parameter& p) {
  // Gradient tapes only run on models owned mutably by the trainer.
  return t.grad_enabled() ? t.param(const_cast<Parameter&>(p)) : t.param(p);
}

Matrix stacked_positions(const Segments& seg, int d) {
  const Matrix pe = positional_encoding(std::max(1, seg.max_length()), d);
  Matrix out(seg.total(), d);
  for (int b = 0; b < seg.count(); ++b) {
    out.middleRows(seg.begin(b), seg.length(b)) = pe.topRows(seg.length(b));
  }
  return out;
}

struct Ctx {
  Tape& t;
  const ModelConfig& cfg;
  bool training;
  Rng* rng;

  Var drop(Var x) const {
    return training && cfg.dropout > 0.0 ? ag::dropout(t, x, cfg.dropout, *rng) : x;
  }

  Var norm(Var x, const LayerNormWeights& w) const { return ag::layer_norm(t, x, P(t, w.gain), P(t, w.bias)); }

  Var ffn(Var x, const FeedForwardWeights& w) const {
    Var h = ag::linear(t, x, P(t, w.w1), P(t, w.b1));
    h = cfg.activation == Activation::Swish ? ag::swish(t, h) : ag::relu(t, h);
    return ag::linear(t, drop(h), P(t, w.w2), P(t, w.b2));
  }

  ag::AttentionOutput attend(Var queries, Var memory, const AttentionWeights& w, const Segments& qs,
                             const Segments& ks, bool causal, bool want_weights) const {
    Var q = ag::linear(t, queries, P(t, w.wq), P(t, w.bq));
    Var k = ag::linear(t, memory, P(t, w.wk), P(t, w.bk));
    Var v = ag::linear(t, memory, P(t, w.wv), P(t, w.bv));
    auto a = ag::attention(t, q, k, v, qs, ks, cfg.n_heads, causal, want_weights);
    a.context = ag::linear(t, a.context, P(t, w.wo), P(t, w.bo));
    return a;
  }

  Var embed(const ModelParameters& p, const std::vector<std::pair<int, int>>& refs, const Segments& seg) const {
    Var e = ag::gather_rows(t, {P(t, p.src_embed), P(t, p.tgt_embed)}, refs);
    e = ag::scale(t, e, std::sqrt(static_cast<double>(cfg.d_model)));
    e = ag::add_constant(t, e, stacked_positions(seg, cfg.d_model));
    return drop(e);
  }

  Var encoder(const ModelParameters& p, const std::vector<std::pair<int, int>>& refs, const Segments& seg) const {
    Var x = embed(p, refs, seg);
    for (const auto& layer : p.encoder) {
      auto a = attend(x, x, layer.self_attn, seg, seg, false, false);
      x = norm(ag::add(t, x, drop(a.context)), layer.norm1);
      x = norm(ag::add(t, x, drop(ffn(x, layer.ffn))), layer.norm2);
    }
    return x;
  }

  struct DecoderOut {
    Var hidden;
    Var weights;
  };

  DecoderOut decoder(const ModelParameters& p, const std::vector<std::pair<int, int>>& refs, const Segments& tseg,
                     Var enc, const Segments& sseg) const {
    Var y = embed(p, refs, tseg);
    Var weights;
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
      const auto& layer = p.decoder[l];
      const bool last = l + 1 == p.decoder.size();
      auto s = attend(y, y, layer.self_attn, tseg, tseg, true, false);
      y = norm(ag::add(t, y, drop(s.context)), layer.norm1);
      auto c = attend(y, enc, layer.cross_attn, tseg, sseg, false, last);
      if (last) weights = c.weights;
      y = norm(ag::add(t, y, drop(c.context)), layer.norm2);
      y = norm(ag::add(t, y, drop(ffn(y, layer.ffn))), layer.norm3);
    }
    return {y, weights};
  }
};

}  // namespace

Var Model::loss(Tape& t, const std::vector<Example>& batch, bool training, Rng* rng) const {
  if (batch.empty()) throw Error("loss: empty batch");
  if (training && config_.dropout > 0.0 && !rng) throw Error("loss: dropout needs an rng");
  Ctx ctx{t, config_, training, rng};
  Segments sseg, tseg;
  std::vector<std::pair<int, int>> src_refs, tgt_refs;
  std::vector<int> gold;
  std::vector<std::vector<int>> types;
  int width = static_cast<int>(tgt_vocab_.size());
  for (const auto& ex : batch) {
    if (ex.source.length() == 0) throw Error("loss: empty source");
    if (ex.gold.size() != ex.decoder_input.size()) throw Error("loss: gold/decoder input mismatch");
    if (static_cast<int>(ex.source.length()) > config_.max_len ||
        static_cast<int>(ex.decoder_input.size()) > config_.max_len + 1) {
      throw Error("loss: sequence longer than max_len");
    }
    bool any = false;
    for (int g : ex.gold) any |= g != Vocabulary::kPad;
    if (!any) throw Error("loss: target contains only padding");
    sseg.push(static_cast<int>(ex.source.length()));
    tseg.push(static_cast<int>(ex.decoder_input.size()));
    src_refs.insert(src_refs.end(), ex.source.embed_refs.begin(), ex.source.embed_refs.end());
    for (int id : ex.decoder_input) tgt_refs.emplace_back(1, id);
    gold.insert(gold.end(), ex.gold.begin(), ex.gold.end());
    types.push_back(ex.source.types);
    width = std::max(width, extended_size(ex.source));
  }

  Var enc = ctx.encoder(params_, src_refs, sseg);
  auto dec = ctx.decoder(params_, tgt_refs, tseg, enc, sseg);
  Var logits = ag::matmul(t, dec.hidden, P(t, params_.out_proj));
  const ag::SmoothedTarget st{config_.confidence, 1, static_cast<int>(tgt_vocab_.size())};
  if (!pointer()) return ag::smoothed_nll_logits(t, logits, gold, st);

  Var pred = ag::softmax_rows(t, logits);
  Var context = ag::weighted_context(t, dec.weights, enc, tseg, sseg);
  Var gate = ag::sigmoid(t, ag::add(t, ag::linear(t, context, P(t, params_.gate_ctx), P(t, params_.gate_bias)),
                                    ag::matmul(t, dec.hidden, P(t, params_.gate_state))));
  Var mixed = ag::pointer_mixture(t, pred, gate, dec.weights, tseg, types, width);
  return ag::smoothed_nll_probs(t, mixed, gold, st);
}

EncoderOutput Model::encode(const PreparedSource& src) const {
  if (src.length() == 0) throw Error("encode: empty source");
  if (static_cast<int>(src.length()) > config_.max_len) {
    throw Error("encode: source length " + std::to_string(src.length()) + " exceeds max_len " +
                std::to_string(config_.max_len));
  }
  Tape t(false);
  Ctx ctx{t, config_, false, nullptr};
  Segments seg;
  seg.push(static_cast<int>(src.length()));
  Var h = ctx.encoder(params_, src.embed_refs, seg);
  return EncoderOutput{src, t.value(h)};
}

DecoderStepState Model::decode_step(const std::vector<int>& prefix, const EncoderOutput& enc) const {
  if (prefix.empty()) throw Error("decode_step: empty prefix");
  if (prefix.front() != Vocabulary::kBos) throw Error("decode_step: prefix must start with BOS");
  ++decode_step_calls_;
  Tape t(false);
  Ctx ctx{t, config_, false, nullptr};
  Segments sseg, tseg;
  sseg.push(static_cast<int>(enc.hidden.rows()));
  tseg.push(static_cast<int>(prefix.size()));
  std::vector<std::pair<int, int>> refs;
  for (int id : prefix) refs.emplace_back(1, decoder_input_id(id, enc.source));
  Var h = t.constant(enc.hidden);
  auto dec = ctx.decoder(params_, refs, tseg, h, sseg);
  DecoderStepState st;
  const auto last = static_cast<Eigen::Index>(prefix.size()) - 1;
  st.hidden = t.value(dec.hidden).row(last);
  st.weights = t.value(dec.weights).row(last);
  st.context = st.weights * enc.hidden;
  return st;
}

double Model::gate(const DecoderStepState& state) const {
  if (!pointer()) return 1.0;
  const double z = state.context.dot(params_.gate_ctx.value.col(0)) +
                   state.hidden.dot(params_.gate_state.value.col(0)) + params_.gate_bias.value(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

std::vector<double> Model::output_distribution(const DecoderStepState& state, const PreparedSource& src,
                                               std::optional<double> gate_override) const {
  ag::RowVector logits = state.hidden * params_.out_proj.value;
  const double mx = logits.maxCoeff();
  ag::RowVector pred = (logits.array() - mx).exp();
  pred /= pred.sum();
  const int width = extended_size(src);
  std::vector<double> out(static_cast<std::size_t>(width), 0.0);
  if (!pointer()) {
    for (Eigen::Index v = 0; v < pred.size(); ++v) out[static_cast<std::size_t>(v)] = pred(v);
    return out;
  }
  const double g = gate_override ? *gate_override : gate(state);
  for (Eigen::Index v = 0; v < pred.size(); ++v) out[static_cast<std::size_t>(v)] = g * pred(v);
  for (std::size_t i = 0; i < src.types.size(); ++i) {
    out[static_cast<std::size_t>(src.types[i])] += (1.0 - g) * state.weights(static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace csmt
