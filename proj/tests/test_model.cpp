#include <cmath>

#include "csmt/error.hpp"
#include "csmt/model.hpp"
#include "csmt/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace csmt;
using test::pair;

namespace {

ModelConfig tiny_config(VocabMode mode) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.vocab_mode = mode;
  c.dropout = 0.0;
  c.max_len = 16;
  return c;
}

Corpus toy_corpus() {
  Corpus c = {pair("a b c", "X Y Z"), pair("c a", "Z X"), pair("b b", "Y Y"), pair("d", "W")};
  Sentence cs = tokenize("a");
  cs.push_back(Token{"Y", Lang::Tgt});
  c.push_back(SentencePair{cs, tokenize("X Y", Lang::Tgt)});
  return c;
}

Model tiny_model(VocabMode mode, std::uint64_t seed = 1) {
  const auto cfg = tiny_config(mode);
  auto [vs, vt] = build_model_vocabularies(toy_corpus(), cfg);
  return Model(cfg, vs, vt, seed);
}

Sentence mixed(std::initializer_list<std::pair<const char*, Lang>> toks) {
  Sentence s;
  for (const auto& [w, l] : toks) s.push_back(Token{w, l});
  return s;
}

std::vector<int> prefix_of(std::initializer_list<int> ids) {
  std::vector<int> p{Vocabulary::kBos};
  p.insert(p.end(), ids);
  return p;
}

}  // namespace

TEST_CASE("vocabularies per mode") {
  const auto corpus = toy_corpus();
  auto [ms, mt] = build_model_vocabularies(corpus, tiny_config(VocabMode::Merged));
  CHECK(ms.contains("Y"));  // merged: source-side target word in the source table
  auto [ss, st] = build_model_vocabularies(corpus, tiny_config(VocabMode::Shared));
  CHECK_FALSE(ss.contains("Y"));
  CHECK(st.contains("Y"));
  CHECK(mt == st);
}

TEST_CASE("config validation and JSON round trip") {
  auto c = tiny_config(VocabMode::SharedPointer);
  c.validate();
  const auto back = ModelConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config(VocabMode::Shared);
  c.confidence = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(vocab_mode_from_string("shared_pointer") == VocabMode::SharedPointer);
  CHECK_THROWS_AS(vocab_mode_from_string("pointer"), Error);
}

TEST_CASE("encoder output shape and position sensitivity") {
  const auto m = tiny_model(VocabMode::Shared);
  const auto enc = m.encode(m.prepare_source(tokenize("a b c")));
  CHECK(enc.hidden.rows() == 3);
  CHECK(enc.hidden.cols() == 8);

  const auto swapped = m.encode(m.prepare_source(tokenize("b a c")));
  CHECK((enc.hidden - swapped.hidden).norm() > 1e-6);

  const auto rep = m.encode(m.prepare_source(tokenize("a a")));
  CHECK((rep.hidden.row(0) - rep.hidden.row(1)).norm() > 1e-6);

  Sentence too_long;
  for (int i = 0; i < 17; ++i) too_long.push_back(Token{"a", Lang::Src});
  CHECK_THROWS_AS(m.encode(m.prepare_source(too_long)), Error);
}

TEST_CASE("decode step: attention weights and context") {
  auto m = tiny_model(VocabMode::SharedPointer);
  const auto enc = m.encode(m.prepare_source(tokenize("a b c")));
  const auto st = m.decode_step(prefix_of({4, 5}), enc);
  CHECK(st.weights.size() == 3);
  CHECK(st.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((st.context - st.weights * enc.hidden).norm() < 1e-12);

  const auto one = m.encode(m.prepare_source(tokenize("d")));
  const auto s1 = m.decode_step({Vocabulary::kBos}, one);
  REQUIRE(s1.weights.size() == 1);
  CHECK(s1.weights(0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(m.decode_step({}, enc), Error);
  CHECK_THROWS_AS(m.decode_step({4}, enc), Error);
  m.reset_decode_step_calls();
  m.decode_step({Vocabulary::kBos}, enc);
  CHECK(m.decode_step_calls() == 1);
}

TEST_CASE("mixture endpoints and zero mass on absent source words") {
  const auto m = tiny_model(VocabMode::SharedPointer);
  const int vt = static_cast<int>(m.tgt_vocab().size());
  const int vs = static_cast<int>(m.src_vocab().size());

  const auto src = m.prepare_source(tokenize("a a"));
  const auto enc = m.encode(src);
  const auto st = m.decode_step(prefix_of({}), enc);
  const auto pred = m.output_distribution(st, src, 1.0);
  CHECK(static_cast<int>(pred.size()) == vt + vs);
  for (int v = vt; v < vt + vs; ++v) CHECK(pred[static_cast<std::size_t>(v)] == 0.0);

  const auto copy = m.output_distribution(st, src, 0.0);
  const int a = vt + m.src_vocab().id_of("a");
  CHECK(copy[static_cast<std::size_t>(a)] == doctest::Approx(1.0).epsilon(1e-12));

  const auto mix = m.output_distribution(st, src);
  double total = 0.0;
  for (double p : mix) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (int v = vt; v < vt + vs; ++v) {
    if (v != a) CHECK(mix[static_cast<std::size_t>(v)] == 0.0);
  }
  const double g = m.gate(st);
  CHECK(g > 0.0);
  CHECK(g < 1.0);
}

TEST_CASE("copy mass of a TGT-tagged source word lands on its target id") {
  const auto m = tiny_model(VocabMode::SharedPointer);
  const auto src = m.prepare_source(mixed({{"a", Lang::Src}, {"Y", Lang::Tgt}, {"zz", Lang::Src}}));
  CHECK(src.types[1] == m.tgt_vocab().id_of("Y"));
  CHECK(src.oov_surfaces == std::vector<std::string>{"zz"});
  const int oov = m.extended_size(src) - 1;
  CHECK(m.surface_of(oov, src) == "zz");
  CHECK(m.decoder_input_id(oov, src) == Vocabulary::kUnk);
  const auto copy = m.output_distribution(m.decode_step(prefix_of({}), m.encode(src)), src, 0.0);
  double total = 0.0;
  for (double p : copy) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(copy[static_cast<std::size_t>(m.tgt_vocab().id_of("Y"))] > 0.0);
  CHECK(copy[static_cast<std::size_t>(oov)] > 0.0);

  // an OOV target word that the source contains becomes a copyable gold id
  const auto ex = m.make_example(SentencePair{tokenize("a zz"), tokenize("zz X", Lang::Tgt)});
  CHECK(ex.gold[0] == m.extended_size(ex.source) - 1);
  CHECK(ex.decoder_input[1] == Vocabulary::kUnk);
  CHECK(ex.gold.back() == Vocabulary::kEos);
}

TEST_CASE("non-pointer modes output the target vocabulary only") {
  for (auto mode : {VocabMode::Merged, VocabMode::Shared}) {
    const auto m = tiny_model(mode);
    const auto src = m.prepare_source(tokenize("a b"));
    const auto p = m.output_distribution(m.decode_step(prefix_of({}), m.encode(src)), src);
    CHECK(p.size() == m.tgt_vocab().size());
    double total = 0.0;
    for (double x : p) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("causality: later target tokens never change earlier steps") {
  const auto m = tiny_model(VocabMode::SharedPointer);
  const auto enc = m.encode(m.prepare_source(tokenize("a b c")));
  const auto pair_a = SentencePair{tokenize("a b c"), tokenize("X Y Z", Lang::Tgt)};
  const auto pair_b = SentencePair{tokenize("a b c"), tokenize("X W W", Lang::Tgt)};
  const auto ea = m.make_example(pair_a), eb = m.make_example(pair_b);
  // through decode_step: steps 0 and 1 depend on BOS, X only
  const auto s_a = m.decode_step({Vocabulary::kBos, ea.decoder_input[1]}, enc);
  const auto s_b = m.decode_step({Vocabulary::kBos, eb.decoder_input[1]}, enc);
  CHECK((s_a.hidden - s_b.hidden).norm() == 0.0);
  const auto l_a = m.decode_step(std::vector<int>(ea.decoder_input.begin(), ea.decoder_input.end()), enc);
  const auto l_b = m.decode_step(std::vector<int>(eb.decoder_input.begin(), eb.decoder_input.end()), enc);
  CHECK((l_a.hidden - l_b.hidden).norm() > 1e-9);
}

TEST_CASE("shared modes alias target embeddings into the encoder") {
  auto m = tiny_model(VocabMode::Shared);
  const auto src = m.prepare_source(mixed({{"a", Lang::Src}, {"Y", Lang::Tgt}}));
  const int y = m.tgt_vocab().id_of("Y");
  CHECK(src.embed_refs[1] == std::pair<int, int>{1, y});
  const auto before = m.encode(src).hidden;
  m.params().tgt_embed.value.row(y).array() += 0.5;
  const auto after = m.encode(src).hidden;
  CHECK((before - after).norm() > 1e-6);
  // the source table plays no part for that token
  const auto plain = m.prepare_source(tokenize("a"));
  const auto e1 = m.encode(plain).hidden;
  m.params().tgt_embed.value.row(y).array() += 0.5;
  CHECK((m.encode(plain).hidden - e1).norm() == 0.0);

  // gradient of a source-side target word reaches the target table
  for (auto* p : m.parameters()) p->zero_grad();
  ag::Tape t;
  const auto ex = m.make_example(SentencePair{mixed({{"a", Lang::Src}, {"Y", Lang::Tgt}}), tokenize("X", Lang::Tgt)});
  t.backward(m.loss(t, {ex}, false, nullptr));
  CHECK(m.params().tgt_embed.grad.row(y).norm() > 0.0);

  auto merged = tiny_model(VocabMode::Merged);
  const auto msrc = merged.prepare_source(mixed({{"Y", Lang::Tgt}}));
  CHECK(msrc.embed_refs[0].first == 0);
}

TEST_CASE("loss preconditions and parameter inventory") {
  auto m = tiny_model(VocabMode::SharedPointer);
  ag::Tape t;
  CHECK_THROWS_AS(m.loss(t, {}, false, nullptr), Error);
  auto ex = m.make_example(pair("a b", "X Y"));
  auto pad = ex;
  pad.gold.assign(pad.gold.size(), Vocabulary::kPad);
  CHECK_THROWS_AS(m.loss(t, {pad}, false, nullptr), Error);
  const double l = t.value(m.loss(t, {ex}, false, nullptr))(0, 0);
  CHECK(std::isfinite(l));
  CHECK(l > 0.0);

  std::size_t pointer_params = 0;
  for (auto* p : m.parameters()) pointer_params += p->name.rfind("gate", 0) == 0;
  CHECK(pointer_params == 3);
  auto shared = tiny_model(VocabMode::Shared);
  for (auto* p : shared.parameters()) CHECK(p->name.rfind("gate", 0) != 0);
}

TEST_CASE("initialisation is seed-deterministic") {
  const auto a = tiny_model(VocabMode::SharedPointer, 4), b = tiny_model(VocabMode::SharedPointer, 4),
             c = tiny_model(VocabMode::SharedPointer, 5);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    any_diff |= pa[i]->value != pc[i]->value;
  }
  CHECK(any_diff);
}

TEST_CASE("sinusoidal positions") {
  const auto pe = positional_encoding(4, 6);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe(1, 1) == doctest::Approx(std::cos(1.0)));
  CHECK(pe(2, 2) == doctest::Approx(std::sin(2.0 / std::pow(10000.0, 2.0 / 6.0))));
}
