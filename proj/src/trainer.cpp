#include "csmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "csmt/error.hpp"
#include "csmt/io.hpp"
#include "csmt/rng.hpp"

namespace csmt {

AdamOptimizer::AdamOptimizer(std::vector<ag::Parameter*> params, const ModelConfig& config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ag::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamOptimizer::learning_rate(long step) const {
  const double s = static_cast<double>(std::max(1L, step));
  const double w = static_cast<double>(config_.warmup_steps);
  return config_.learning_rate * std::min(s / w, std::sqrt(w / s));
}

double AdamOptimizer::step() {
  double sq = 0.0;
  for (auto* p : params_) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  ++step_;
  const double lr = learning_rate(step_);
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    const ag::Matrix g = p.grad * clip;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.adam_eps);
  }
  return norm;
}

TrainReport train(Model& model, const Corpus& corpus, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw Error("train: empty corpus");
  const auto& cfg = model.config();
  std::vector<Example> examples;
  for (const auto& pair : corpus) {
    if (pair.source.empty() || pair.target.empty()) continue;
    if (static_cast<int>(pair.source.size()) > cfg.max_len || static_cast<int>(pair.target.size()) >= cfg.max_len) {
      continue;
    }
    examples.push_back(model.make_example(pair));
  }
  if (examples.empty()) throw Error("train: no usable sentence pairs");

  Rng rng(seed);
  AdamOptimizer opt(model.parameters(), cfg);
  TrainReport report;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      if (cfg.max_steps > 0 && report.steps >= cfg.max_steps) break;
      std::vector<Example> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++k) {
        batch.push_back(examples[order[k]]);
      }
      for (auto* p : model.parameters()) p->zero_grad();
      ag::Tape tape;
      ag::Var loss = model.loss(tape, batch, true, &rng);
      const double value = tape.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw Error("non-finite loss " + std::to_string(value) + " at step " + std::to_string(report.steps + 1) +
                    " (epoch " + std::to_string(epoch) + ", lr " + std::to_string(opt.learning_rate(report.steps + 1)) +
                    ")");
      }
      tape.backward(loss);
      opt.step();
      ++report.steps;
      ++epoch_steps;
      epoch_loss += value;
      report.step_losses.push_back(value);
    }
    if (epoch_steps == 0) break;
    EpochReport er{epoch, report.steps, epoch_loss / static_cast<double>(epoch_steps)};
    report.epochs.push_back(er);
    if (on_epoch) on_epoch(model, er);
  }
  return report;
}

Model train_new_model(const Corpus& corpus, const ModelConfig& config, std::uint64_t seed, TrainReport* report,
                      const EpochCallback& on_epoch) {
  auto [src, tgt] = build_model_vocabularies(corpus, config);
  Model model(config, std::move(src), std::move(tgt), seed);
  auto r = train(model, corpus, seed + 1, on_epoch);
  if (report) *report = std::move(r);
  return model;
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradientCheckReport gradient_check(Model& model, const std::vector<Example>& batch, double epsilon,
                                   int samples_per_tensor, std::uint64_t seed,
                                   const std::function<void(Model&)>& tamper) {
  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  {
    ag::Tape tape;
    ag::Var loss = model.loss(tape, batch, false, nullptr);
    tape.backward(loss);
  }
  if (tamper) tamper(model);

  auto eval = [&] {
    ag::Tape tape(false);
    return tape.value(model.loss(tape, batch, false, nullptr))(0, 0);
  };

  Rng rng(seed);
  GradientCheckReport report;
  for (auto* p : params) {
    const auto n = static_cast<std::size_t>(p->value.size());
    for (std::size_t idx : rng.sample_indices(n, static_cast<std::size_t>(samples_per_tensor))) {
      double& x = p->value.data()[idx];
      const double saved = x;
      x = saved + epsilon;
      const double up = eval();
      x = saved - epsilon;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = relative_error(p->grad.data()[idx], numeric);
      ++report.coordinates_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_tensor = p->name;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'S', 'M', 'T', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string vocab_tsv(const Vocabulary& v) {
  std::ostringstream ss;
  v.save(ss);
  return ss.str();
}

}  // namespace

std::string serialize_tensors(const Model& model) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.append(reinterpret_cast<const char*>(p->value.data()),
               static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return out;
}

void save_checkpoint(const Model& model, const std::string& prefix, const CheckpointMeta& meta) {
  const std::string blob = serialize_tensors(model);
  const std::string src = vocab_tsv(model.src_vocab());
  const std::string tgt = vocab_tsv(model.tgt_vocab());
  write_file_atomic(prefix + ".bin", blob);
  write_file_atomic(prefix + ".src.vocab", src);
  write_file_atomic(prefix + ".tgt.vocab", tgt);
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config"] = model.config().to_json();
  j["src_vocab_sha256"] = sha256_hex(src);
  j["tgt_vocab_sha256"] = sha256_hex(tgt);
  j["tensors_sha256"] = sha256_hex(blob);
  j["step"] = meta.step;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["final_loss"] = meta.final_loss;
  write_file_atomic(prefix + ".json", j.dump(2) + "\n");
}

Model load_checkpoint(const std::string& prefix, CheckpointMeta* meta) {
  const auto j = nlohmann::json::parse(read_file(prefix + ".json"));
  if (!j.contains("version")) throw Error("checkpoint sidecar lacks a version field");
  if (j.at("version").get<int>() != kCheckpointVersion) throw Error("unsupported checkpoint version");
  const std::string src = read_file(prefix + ".src.vocab");
  const std::string tgt = read_file(prefix + ".tgt.vocab");
  const std::string blob = read_file(prefix + ".bin");
  if (sha256_hex(src) != j.at("src_vocab_sha256") || sha256_hex(tgt) != j.at("tgt_vocab_sha256")) {
    throw Error("checkpoint vocabulary hash mismatch");
  }
  if (sha256_hex(blob) != j.at("tensors_sha256")) throw Error("checkpoint tensor hash mismatch");
  std::istringstream ss(src), ts(tgt);
  Model model(ModelConfig::from_json(j.at("config")), Vocabulary::load(ss), Vocabulary::load(ts), 0);

  std::size_t pos = 0;
  if (blob.compare(0, sizeof(kMagic), std::string(kMagic, sizeof(kMagic))) != 0) throw Error("bad checkpoint magic");
  pos += sizeof(kMagic);
  if (get<std::uint32_t>(blob, pos) != kCheckpointVersion) throw Error("bad tensor blob version");
  auto params = model.parameters();
  if (get<std::uint32_t>(blob, pos) != params.size()) throw Error("checkpoint tensor count mismatch");
  for (auto* p : params) {
    const auto len = get<std::uint32_t>(blob, pos);
    if (pos + len > blob.size()) throw Error("truncated checkpoint");
    const std::string name = blob.substr(pos, len);
    pos += len;
    const auto rows = get<std::uint32_t>(blob, pos);
    const auto cols = get<std::uint32_t>(blob, pos);
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw Error("checkpoint tensor mismatch at " + name);
    }
    const std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
    if (pos + bytes > blob.size()) throw Error("truncated checkpoint");
    std::memcpy(p->value.data(), blob.data() + pos, bytes);
    pos += bytes;
  }
  if (meta) {
    meta->step = j.at("step");
    meta->epoch = j.at("epoch");
    meta->seed = j.at("seed");
    meta->final_loss = j.at("final_loss");
  }
  return model;
}

}  // namespace csmt
