#include <cmath>

#include "csmt/aligner.hpp"
#include "csmt/error.hpp"
#include "csmt/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace csmt;
using test::pair;

namespace {

void check_rows_normalised(const TranslationTable& t) {
  for (const auto& [src, row] : t.rows()) {
    double s = 0.0;
    for (const auto& [tgt, p] : row) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

// Exhaustive search over every many-to-one map target -> source; Model 1
// without NULL scores an alignment by the product of its link probabilities.
AlignmentLinks brute_force_forward(const SentencePair& p, const TranslationTable& t) {
  const std::size_t m = p.source.size(), n = p.target.size();
  std::vector<std::size_t> a(n, 0), best_a;
  double best = 0.0;
  while (true) {
    double score = 1.0;
    for (std::size_t j = 0; j < n; ++j) score *= t.prob(p.source[a[j]].surface, p.target[j].surface);
    if (score > best) {
      best = score;
      best_a = a;
    }
    std::size_t k = 0;
    while (k < n && ++a[k] == m) a[k++] = 0;
    if (k == n) break;
  }
  AlignmentLinks out;
  for (std::size_t j = 0; j < best_a.size(); ++j) out.emplace(static_cast<int>(best_a[j]), static_cast<int>(j));
  return out;
}

}  // namespace

TEST_CASE("single co-occurrence gets all the mass") {
  const auto t = train_ibm1({pair("a", "x")}, 5);
  CHECK(t.prob("a", "x") == doctest::Approx(1.0));
}

TEST_CASE("EM on a two-sentence corpus matches the frozen oracle") {
  const Corpus c = {pair("a b", "x y"), pair("a", "x")};
  std::vector<double> ll;
  const auto t = train_ibm1(c, 10, &ll);
  CHECK(t.prob("a", "x") == doctest::Approx(0.9970352732178555).epsilon(1e-12));
  CHECK(t.prob("b", "y") == doctest::Approx(0.9289996121524242).epsilon(1e-12));
  CHECK(t.prob("a", "x") > 0.9);
  CHECK(t.prob("b", "y") > 0.9);
  REQUIRE(ll.size() == 10);
  CHECK(ll.front() == doctest::Approx(-2.0794415416798357));
  check_rows_normalised(t);
}

TEST_CASE("training preconditions") {
  CHECK_THROWS_AS(train_ibm1({}, 5), Error);
  CHECK_THROWS_AS(train_ibm1({pair("a", "x")}, 0), Error);
}

TEST_CASE("EM log-likelihood is non-decreasing on a random corpus") {
  Rng rng(3);
  Corpus c;
  for (int s = 0; s < 40; ++s) {
    std::string src, tgt;
    const auto m = 1 + rng.below(5), n = 1 + rng.below(5);
    for (std::uint64_t i = 0; i < m; ++i) src += "s" + std::to_string(rng.below(8)) + " ";
    for (std::uint64_t j = 0; j < n; ++j) tgt += "t" + std::to_string(rng.below(8)) + " ";
    c.push_back(pair(src, tgt));
  }
  std::vector<double> ll;
  const auto t = train_ibm1(c, 15, &ll);
  for (std::size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] >= ll[i - 1] - 1e-9);
  CHECK(ibm1_log_likelihood(c, t) >= ll.back() - 1e-9);
  check_rows_normalised(t);
}

TEST_CASE("forced 1:1 tables give the diagonal alignment") {
  TranslationTable fwd, rev;
  fwd.set("a", "x", 1.0);
  fwd.set("b", "y", 1.0);
  rev.set("x", "a", 1.0);
  rev.set("y", "b", 1.0);
  CHECK(align_pair(pair("a b", "x y"), fwd, rev) == AlignmentLinks{{0, 0}, {1, 1}});
}

TEST_CASE("a word with no table mass stays unaligned") {
  TranslationTable fwd, rev;
  fwd.set("a", "x", 1.0);
  rev.set("x", "a", 1.0);
  CHECK(align_pair(pair("a q", "x"), fwd, rev) == AlignmentLinks{{0, 0}});
  CHECK(align_pair(pair("q", "z"), fwd, rev).empty());
}

TEST_CASE("directional Viterbi equals exhaustive argmax; intersection is a subset") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TranslationTable fwd, rev;
    for (const char* s : {"a", "b", "c"}) {
      for (const char* t : {"x", "y"}) {
        fwd.set(s, t, rng.uniform(0.01, 1.0));
        rev.set(t, s, rng.uniform(0.01, 1.0));
      }
    }
    const auto p = pair("a b c", "x y");
    const auto f = viterbi_forward(p, fwd);
    CHECK(f == brute_force_forward(p, fwd));
    const auto r = viterbi_reverse(p, rev);
    AlignmentLinks r_flipped;
    for (const auto& [j, i] : brute_force_forward(reversed({p})[0], rev)) r_flipped.emplace(i, j);
    CHECK(r == r_flipped);
    const auto both = align_pair(p, fwd, rev);
    for (const auto& l : both) {
      CHECK(f.count(l) == 1);
      CHECK(r.count(l) == 1);
    }
  }
}

TEST_CASE("serialisation round trips") {
  const auto t = train_ibm1({pair("a b", "x y"), pair("a", "x")}, 3);
  const auto back = TranslationTable::from_tsv(t.to_tsv());
  CHECK(back.to_tsv() == t.to_tsv());
  CHECK(back.prob("a", "x") == doctest::Approx(t.prob("a", "x")).epsilon(1e-15));
  const AlignmentLinks links{{0, 1}, {2, 0}};
  CHECK(to_pharaoh(links) == "0-1 2-0");
  CHECK(from_pharaoh("0-1 2-0") == links);
  CHECK(from_pharaoh("").empty());
  CHECK_THROWS_AS(from_pharaoh("0-"), Error);
}
