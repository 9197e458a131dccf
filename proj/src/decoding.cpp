#include "csmt/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "csmt/error.hpp"
#include "json.hpp"

namespace csmt {

double Hypothesis::score() const {
  return ids.empty() ? 0.0 : log_prob / static_cast<double>(ids.size());
}

namespace {

bool better(const Hypothesis& a, const Hypothesis& b) {
  const double sa = a.score(), sb = b.score();
  if (sa != sb) return sa > sb;
  return a.ids < b.ids;
}

}  // namespace

Hypothesis beam_search(const Model& model, const Sentence& source, const BeamOptions& opts, DecodeStats* stats) {
  if (opts.beam_size < 1) throw Error("beam_size must be >= 1");
  if (source.empty()) return Hypothesis{{}, {}, 0.0, true};
  const int max_len = opts.max_len > 0 ? opts.max_len : 2 * static_cast<int>(source.size()) + 5;
  const auto beam_size = static_cast<std::size_t>(opts.beam_size);

  const EncoderOutput enc = model.encode(model.prepare_source(source));
  std::vector<Hypothesis> beam{Hypothesis{}};

  for (int step = 0; step < max_len; ++step) {
    std::vector<Hypothesis> candidates;
    for (const auto& hyp : beam) {
      if (hyp.finished) {
        candidates.push_back(hyp);
        continue;
      }
      std::vector<int> prefix{Vocabulary::kBos};
      prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
      const auto state = model.decode_step(prefix, enc);
      const auto dist = model.output_distribution(state, enc.source);
      if (stats) ++stats->decode_steps;

      // Best beam_size continuations of this hypothesis.
      std::vector<int> ids;
      for (int v = 0; v < static_cast<int>(dist.size()); ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
        if (dist[static_cast<std::size_t>(v)] > 0.0) ids.push_back(v);
      }
      const auto keep = std::min(beam_size, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), [&](int a, int b) {
        const double pa = dist[static_cast<std::size_t>(a)], pb = dist[static_cast<std::size_t>(b)];
        return pa != pb ? pa > pb : a < b;
      });
      for (std::size_t k = 0; k < keep; ++k) {
        Hypothesis next = hyp;
        next.ids.push_back(ids[k]);
        next.log_prob += std::log(dist[static_cast<std::size_t>(ids[k])]);
        next.finished = ids[k] == Vocabulary::kEos;
        if (!next.finished) next.tokens.push_back(model.surface_of(ids[k], enc.source));
        candidates.push_back(std::move(next));
      }
      if (stats) ++stats->expanded_tokens;
    }
    if (stats) ++stats->beam_steps;
    std::sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > beam_size) candidates.resize(beam_size);
    beam = std::move(candidates);
    if (std::all_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.finished; })) break;
  }

  for (const auto& h : beam) {
    if (h.finished) return h;
  }
  return beam.front();  // unfinished, flagged by finished == false
}

std::vector<TranslationRecord> translate_corpus(const Model& model, const std::vector<Sentence>& inputs,
                                                const std::vector<ConstraintSet>* constraints,
                                                const BeamOptions& opts, DecodeStats* stats) {
  if (constraints && constraints->size() != inputs.size()) {
    throw Error("translate_corpus: " + std::to_string(inputs.size()) + " inputs vs " +
                std::to_string(constraints->size()) + " constraint sets");
  }
  std::vector<TranslationRecord> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    TranslationRecord rec;
    if (constraints) {
      auto cs = apply_constraints(inputs[i], (*constraints)[i]);
      rec.input = std::move(cs.source);
      rec.applied = std::move(cs.applied);
    } else {
      rec.input = inputs[i];
    }
    rec.hypothesis = beam_search(model, rec.input, opts, stats);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::string> hypothesis_lines(const std::vector<TranslationRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(join(r.hypothesis.tokens));
  return out;
}

std::string audit_jsonl(const std::vector<TranslationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json applied = nlohmann::json::array();
    for (const auto& e : r.applied) applied.push_back({join(e.src), join(e.tgt)});
    nlohmann::json j{{"input", join(r.input)},
                     {"applied", applied},
                     {"hypothesis", join(r.hypothesis.tokens)},
                     {"log_prob", r.hypothesis.log_prob},
                     {"score", r.hypothesis.score()},
                     {"finished", r.hypothesis.finished}};
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace csmt
