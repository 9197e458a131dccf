#include "csmt/synthetic.hpp"

#include <set>

#include "csmt/error.hpp"
#include "csmt/rng.hpp"

namespace csmt {

SyntheticTask make_synthetic_task(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size < 2) throw Error("synthetic vocab_size must be >= 2");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len) throw Error("synthetic lengths must satisfy 1 <= min <= max");
  Rng rng(seed);
  const std::size_t v = cfg.vocab_size;
  std::vector<std::size_t> perm(v);
  for (std::size_t i = 0; i < v; ++i) perm[i] = i;
  if (!cfg.identity) rng.shuffle(perm);
  const auto n_mod = cfg.identity ? 0 : static_cast<std::size_t>(cfg.modifier_fraction * static_cast<double>(v));

  auto src_word = [](std::size_t i) { return "s" + std::to_string(i); };
  auto tgt_word = [&](std::size_t i) { return cfg.identity ? src_word(i) : "t" + std::to_string(perm[i]); };
  auto is_mod = [&](std::size_t i) { return i < n_mod; };

  auto make_pair = [&](const std::vector<std::size_t>& sym) {
    SentencePair p;
    for (auto s : sym) p.source.push_back(Token{src_word(s), Lang::Src});
    for (std::size_t i = 0; i < sym.size();) {
      if (i + 1 < sym.size() && is_mod(sym[i]) && !is_mod(sym[i + 1])) {
        p.target.push_back(Token{tgt_word(sym[i + 1]), Lang::Tgt});
        p.target.push_back(Token{tgt_word(sym[i]), Lang::Tgt});
        i += 2;
      } else {
        p.target.push_back(Token{tgt_word(sym[i]), Lang::Tgt});
        ++i;
      }
    }
    return p;
  };

  auto draw = [&] {
    const std::size_t len = cfg.min_len + rng.below(cfg.max_len - cfg.min_len + 1);
    std::vector<std::size_t> sym(len);
    for (auto& s : sym) s = rng.below(v);
    return sym;
  };

  SyntheticTask task;
  std::set<std::vector<std::size_t>> seen;
  for (std::size_t k = 0; k < cfg.train_size; ++k) {
    auto sym = draw();
    seen.insert(sym);
    task.train.push_back(make_pair(sym));
  }
  std::size_t attempts = 0;
  while (task.test.size() < cfg.test_size) {
    auto sym = draw();
    if (seen.insert(sym).second || ++attempts > 100 * cfg.test_size) task.test.push_back(make_pair(sym));
  }
  for (std::size_t i = 0; i < v; ++i) task.lexicon.push_back(LexiconEntry{{src_word(i)}, {tgt_word(i)}});
  return task;
}

}  // namespace csmt
