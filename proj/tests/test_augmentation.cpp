#include <algorithm>
#include <map>

#include "csmt/augmentation.hpp"
#include "csmt/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace csmt;
using test::pair;

namespace {

PhraseTable table_of(std::initializer_list<std::pair<const char*, const char*>> items) {
  PhraseTable t;
  for (const auto& [s, g] : items) t.add(split_words(s), split_words(g), 10);
  t.normalize();
  return t;
}

std::size_t entry_id(const MatchIndex& idx, const char* src, const char* tgt) {
  const PhrasePair want{split_words(src), split_words(tgt)};
  for (std::size_t e = 0; e < idx.entries.size(); ++e) {
    if (idx.entries[e] == want) return e;
  }
  FAIL("entry not in index");
  return 0;
}

}  // namespace

TEST_CASE("an aligned occurrence is indexed with its spans") {
  const Corpus c = {pair("a b c", "X Y Z")};
  const auto idx = build_match_index(c, table_of({{"b", "Y"}, {"b", "Z"}}), {{{1, 1}}});
  const auto by = entry_id(idx, "b", "Y");
  REQUIRE(idx.single.count(by) == 1);
  const auto& m = idx.single.at(by);
  REQUIRE(m.size() == 1);
  CHECK(m[0].sentence == 0);
  CHECK(m[0].occurrences == std::vector<Occurrence>{{{1, 1}, {1, 1}}});
  // (b, Z): the link of b leaves the box, so the occurrence is not indexed
  CHECK(idx.single.count(entry_id(idx, "b", "Z")) == 0);
}

TEST_CASE("combinations require disjoint spans on both sides") {
  const Corpus c = {pair("a b c", "X Y Z")};
  const std::vector<AlignmentLinks> al = {{{0, 0}, {1, 1}, {2, 2}}};
  const auto idx = build_match_index(c, table_of({{"a b", "X Y"}, {"b c", "Y Z"}, {"c", "Z"}}), al);
  const auto ab = entry_id(idx, "a b", "X Y"), bc = entry_id(idx, "b c", "Y Z"), cz = entry_id(idx, "c", "Z");
  auto key = [](std::size_t x, std::size_t y) { return std::make_pair(std::min(x, y), std::max(x, y)); };
  CHECK(idx.combos.count(key(ab, bc)) == 0);  // overlap on "b"
  REQUIRE(idx.combos.count(key(ab, cz)) == 1);
  for (const auto& [k, matches] : idx.combos) {
    for (const auto& dm : matches) {
      for (const auto& [x, y] : dm.occurrences) {
        CHECK_FALSE(x.src.overlaps(y.src));
        CHECK_FALSE(x.tgt.overlaps(y.tgt));
      }
    }
  }
  CHECK(build_match_index(c, table_of({{"a b", "X Y"}, {"c", "Z"}}), al, false).combos.empty());
}

TEST_CASE("apply_replacements rewrites the source and tags inserted words") {
  const auto p = pair("a b c", "X Y Z");
  const auto one = apply_replacements(p, {{{1, 1}, {"Y"}}});
  CHECK(join(one.source) == "a Y c");
  CHECK(one.source[1].lang == Lang::Tgt);
  CHECK(one.source[0].lang == Lang::Src);
  CHECK(one.target == p.target);
  REQUIRE(one.replacements.size() == 1);
  CHECK(one.replacements[0].original == Phrase{"b"});

  const auto two = apply_replacements(p, {{{2, 2}, {"Z"}}, {{0, 0}, {"X"}}});
  CHECK(join(two.source) == "X b Z");
  CHECK(restore_original(two) == p);

  const auto longer = apply_replacements(p, {{{0, 1}, {"P", "Q", "R"}}});
  CHECK(join(longer.source) == "P Q R c");
  CHECK(restore_original(longer) == p);

  CHECK_THROWS_AS(apply_replacements(p, {{{0, 1}, {"X"}}, {{1, 2}, {"Y"}}}), Error);
  CHECK_THROWS_AS(apply_replacements(p, {{{2, 3}, {"X"}}}), Error);
  CHECK_THROWS_AS(apply_replacements(p, {{{-1, 0}, {"X"}}}), Error);
}

TEST_CASE("sampling caps, small lists and determinism") {
  // 150 sentences match (a, X): cap at k1; 3 match (q, Q)
  Corpus c;
  std::vector<AlignmentLinks> al;
  for (int k = 0; k < 150; ++k) {
    c.push_back(pair("a b", "X Y"));
    al.push_back({{0, 0}, {1, 1}});
  }
  for (int k = 0; k < 3; ++k) {
    c.push_back(pair("q", "Q"));
    al.push_back({{0, 0}});
  }
  const auto idx = build_match_index(c, table_of({{"a", "X"}, {"b", "Y"}, {"q", "Q"}}), al);
  SamplingOptions opts;
  opts.seed = 5;
  const auto out = sample_augmented(idx, c, opts);
  std::map<std::string, std::size_t> per;
  for (const auto& a : out) {
    std::string key;
    for (const auto& r : a.replacements) key += join(r.original) + ">" + join(r.inserted) + ";";
    ++per[key];
  }
  CHECK(per["a>X;"] == 100);
  CHECK(per["b>Y;"] == 100);
  CHECK(per["q>Q;"] == 3);
  CHECK(per["a>X;b>Y;"] == 30);
  CHECK(out.size() == 233);

  CHECK(to_jsonl(sample_augmented(idx, c, opts)) == to_jsonl(out));
  opts.seed = 6;
  CHECK(sample_augmented(idx, c, opts).size() == out.size());
  CHECK(sample_augmented(MatchIndex{}, c, opts).empty());
}

TEST_CASE("augmented pairs stay faithful to their originals") {
  Corpus c = {pair("a b c", "X Y Z"), pair("c a", "Z X"), pair("b b a", "Y Y X")};
  std::vector<AlignmentLinks> al = {{{0, 0}, {1, 1}, {2, 2}}, {{0, 0}, {1, 1}}, {{0, 0}, {1, 1}, {2, 2}}};
  const auto idx = build_match_index(c, table_of({{"a", "X"}, {"b", "Y"}, {"c", "Z"}}), al);
  const auto out = sample_augmented(idx, c, {});
  REQUIRE_FALSE(out.empty());
  for (const auto& a : out) {
    CHECK(a.replacements.size() >= 1);
    CHECK(a.replacements.size() <= 2);
    const auto orig = restore_original(a);
    CHECK(std::find(c.begin(), c.end(), orig) != c.end());
    const auto tgt = surfaces(a.target);
    for (const auto& t : a.source) {
      if (t.lang == Lang::Tgt) CHECK(std::find(tgt.begin(), tgt.end(), t.surface) != tgt.end());
    }
  }
  CHECK(from_jsonl(to_jsonl(out)) == out);
  CHECK(code_switched_lines(out).size() == out.size());
}

TEST_CASE("training set: originals first, all SRC tagged, no dedup") {
  Corpus orig;
  for (int k = 0; k < 10; ++k) orig.push_back(pair("a b", "X Y"));
  const auto aug = std::vector<AugmentedPair>(4, apply_replacements(orig[0], {{{0, 0}, {"X"}}}));
  const auto all = build_training_set(orig, aug);
  CHECK(all.size() == 14);
  CHECK(all[0] == orig[0]);
  CHECK(all[13].source[0].lang == Lang::Tgt);
  CHECK(build_training_set(orig, {}) == orig);
}

TEST_CASE("JSON lines format") {
  const auto a = apply_replacements(pair("a b", "X Y"), {{{1, 1}, {"Y"}}});
  const auto line = to_jsonl({a});
  CHECK(line.find("\"src\":[\"a\",\"Y\"]") != std::string::npos);
  CHECK(line.find("\"src_lang\":[\"S\",\"T\"]") != std::string::npos);
  CHECK(line.find("\"repl\":[[1,1,\"Y\"]]") != std::string::npos);
  CHECK(line.back() == '\n');
}
