#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace csmt {

/// Language of a token inside a (possibly code-switched) sentence.
enum class Lang : std::uint8_t { Src = 0, Tgt = 1 };

struct Token {
  std::string surface;
  Lang lang = Lang::Src;

  friend bool operator==(const Token&, const Token&) = default;
};

using Sentence = std::vector<Token>;

struct SentencePair {
  Sentence source;
  Sentence target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using Corpus = std::vector<SentencePair>;

/// Whitespace tokenizer; every token gets `lang`.
Sentence tokenize(std::string_view line, Lang lang = Lang::Src);

std::vector<std::string> surfaces(const Sentence& s);
std::string join(const Sentence& s);
std::string join(const std::vector<std::string>& words);
std::vector<std::string> split_words(std::string_view line);

/// Word vocabulary with four reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;
  static constexpr std::string_view kSpecialSurfaces[kNumSpecials] = {
      "<pad>", "<s>", "</s>", "<unk>"};

  /// Specials only.
  Vocabulary();

  /// Top (max_size - 4) surfaces by frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t max_size);

  int id_of(std::string_view surface) const;  // kUnk when absent
  bool contains(std::string_view surface) const;
  const std::string& surface_of(int id) const;
  std::size_t size() const { return surfaces_.size(); }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  /// TSV `surface \t id`, specials first.
  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static Vocabulary load(std::istream& is);
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.surfaces_ == b.surfaces_;
  }

 private:
  void add(std::string surface);

  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, int> ids_;
};

struct ReadStats {
  std::size_t read = 0;
  std::size_t dropped = 0;
};

/// Reads line-aligned source/target files. Pairs with an empty side, or a
/// side longer than max_len tokens, are dropped and counted.
Corpus read_parallel(const std::string& src_path, const std::string& tgt_path,
                     std::size_t max_len = 128, ReadStats* stats = nullptr);

void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::string& path);

struct EncodedToken {
  int id = Vocabulary::kUnk;
  Lang lang = Lang::Src;

  friend bool operator==(const EncodedToken&, const EncodedToken&) = default;
};

using EncodedSentence = std::vector<EncodedToken>;

/// SRC tokens are looked up in vocab_src, TGT tokens in vocab_tgt.
EncodedSentence encode(const Sentence& tokens, const Vocabulary& vocab_src,
                       const Vocabulary& vocab_tgt);
Sentence decode(const EncodedSentence& ids, const Vocabulary& vocab_src,
                const Vocabulary& vocab_tgt);

}  // namespace csmt
