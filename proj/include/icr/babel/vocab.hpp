#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "icr/error.hpp"
#include "icr/tokens.hpp"

namespace icr::babel {

inline constexpr Token kBos = 0;
inline constexpr Token kEos = 1;
inline constexpr Token kPad = 2;
inline constexpr Token kSep = 3;
inline constexpr int kNumSpecials = 4;

// Language 0 is "English": its block is the canonical content block and its
// cipher is the identity.
inline constexpr int kEnglish = 0;

struct ContentId {
  int lang = 0;
  int index = 0;
  bool operator==(const ContentId&) const = default;
};

// Token numbering: [specials | one tag per language | L content blocks of m].
// Content (lang, c) lives at content_base + lang * m + c.
class VocabLayout {
 public:
  VocabLayout() = default;
  VocabLayout(int num_langs, int alphabet) : L_(num_langs), m_(alphabet) {
    require(num_langs >= 2 && alphabet >= 4, ErrorKind::invalid_argument,
            "make_vocab needs L >= 2 and m >= 4");
  }

  int num_langs() const { return L_; }
  int alphabet() const { return m_; }
  int num_specials() const { return kNumSpecials; }
  int vocab_size() const { return kNumSpecials + L_ + L_ * m_; }
  Token content_base() const { return kNumSpecials + L_; }

  Token tag(int lang) const {
    check_lang(lang);
    return kNumSpecials + lang;
  }

  Token encode(int lang, int c) const {
    check_lang(lang);
    require(c >= 0 && c < m_, ErrorKind::invalid_argument, "content index out of range");
    return content_base() + lang * m_ + c;
  }

  bool is_special(Token t) const { return t >= 0 && t < kNumSpecials; }
  bool is_tag(Token t) const { return t >= kNumSpecials && t < content_base(); }
  bool is_content(Token t) const { return t >= content_base() && t < vocab_size(); }

  std::optional<int> tag_lang(Token t) const {
    if (!is_tag(t)) return std::nullopt;
    return t - kNumSpecials;
  }

  std::optional<ContentId> decode(Token t) const {
    if (!is_content(t)) return std::nullopt;
    const int off = t - content_base();
    return ContentId{off / m_, off % m_};
  }

  bool valid_lang(int lang) const { return lang >= 0 && lang < L_; }

  void check_lang(int lang) const {
    if (!valid_lang(lang)) fail(ErrorKind::unknown_language, "language id " + std::to_string(lang));
  }

  std::string fingerprint() const {
    return "babel-v1:L=" + std::to_string(L_) + ",m=" + std::to_string(m_) + ",specials=" +
           std::to_string(kNumSpecials);
  }

  bool operator==(const VocabLayout&) const = default;

 private:
  int L_ = 0;
  int m_ = 0;
};

inline VocabLayout make_vocab(int num_langs, int alphabet) { return VocabLayout(num_langs, alphabet); }

// A language: its cipher (content index -> token in its block) and the
// prefix tokens that request answers in it.
struct LanguageSpec {
  int lang = 0;
  TokenSeq cipher;
  TokenSeq prefix_tokens;
};

inline LanguageSpec language(const VocabLayout& vocab, int lang) {
  vocab.check_lang(lang);
  LanguageSpec spec;
  spec.lang = lang;
  for (int c = 0; c < vocab.alphabet(); ++c) spec.cipher.push_back(vocab.encode(lang, c));
  spec.prefix_tokens = {vocab.tag(lang)};
  return spec;
}

inline std::string lang_name(int lang) {
  static const char* names[] = {"en", "l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9"};
  if (lang >= 0 && lang < 10) return names[lang];
  return "l" + std::to_string(lang);
}

}  // namespace icr::babel
