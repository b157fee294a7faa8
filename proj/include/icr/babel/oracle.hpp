#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/tokens.hpp"

namespace icr::babel {

struct DecodedPrompt {
  int lang = 0;          // language the answer is requested in
  int content_lang = 0;  // language the content is written in
  std::vector<int> content;
};

// Accepts the native form BOS tag(l) content SEP and the cross-lingual form
// tag(l) BOS tag(en) content SEP.
inline DecodedPrompt decode_prompt(const VocabLayout& vocab, TokenSpan prompt) {
  auto bad = [](const char* why) { fail(ErrorKind::undecodable_prompt, why); };
  std::size_t i = 0;
  std::optional<int> requested;
  if (!prompt.empty() && vocab.is_tag(prompt[0])) {
    requested = vocab.tag_lang(prompt[0]);
    i = 1;
  }
  if (prompt.size() < i + 3 || prompt[i] != kBos) bad("prompt does not start with BOS");
  const auto tag = vocab.tag_lang(prompt[i + 1]);
  if (!tag) bad("prompt has no language tag after BOS");
  if (prompt.back() != kSep) bad("prompt does not end with SEP");
  DecodedPrompt out;
  out.content_lang = *tag;
  out.lang = requested.value_or(*tag);
  if (requested && *tag != kEnglish) bad("cross-lingual prompt must carry English content");
  for (std::size_t j = i + 2; j + 1 < prompt.size(); ++j) {
    const auto id = vocab.decode(prompt[j]);
    if (!id || id->lang != out.content_lang) bad("prompt content token outside its language block");
    out.content.push_back(id->index);
  }
  if (out.content.empty()) bad("prompt has no content");
  return out;
}

inline std::size_t lcs_length(TokenSpan a, TokenSpan b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct OracleScore {
  double value = 0.0;
  double correctness = 0.0;
  double verbosity_penalty = 0.0;
  double fidelity_penalty = 0.0;
};

// value = clamp(LCS(response, ideal)/k - verbosity - off-language fraction, 0, 1).
// Tokens after the first EOS are ignored; |y| counts the EOS when present.
inline OracleScore oracle_score(const VocabLayout& vocab, TokenSpan prompt, TokenSpan response,
                                double verbosity_weight = 0.5) {
  const DecodedPrompt dp = decode_prompt(vocab, prompt);
  TaskInstance task{0, dp.content};
  const TokenSeq ideal = ideal_response(vocab, task, dp.lang);
  const TokenSpan ideal_body(ideal.data(), ideal.size() - 1);

  const auto eos = std::find(response.begin(), response.end(), kEos);
  const TokenSpan body(response.data(), static_cast<std::size_t>(eos - response.begin()));
  const std::size_t length = body.size() + (eos != response.end() ? 1 : 0);

  OracleScore s;
  s.correctness = static_cast<double>(lcs_length(body, ideal_body)) / static_cast<double>(ideal_body.size());
  const double extra = std::max(0.0, static_cast<double>(length) - static_cast<double>(ideal.size()));
  s.verbosity_penalty = verbosity_weight * extra / static_cast<double>(ideal.size());
  if (!body.empty()) {
    std::size_t off = 0;
    for (Token t : body) {
      const auto id = vocab.decode(t);
      if (!id || id->lang != dp.lang) ++off;
    }
    s.fidelity_penalty = static_cast<double>(off) / static_cast<double>(body.size());
  }
  s.value = std::clamp(s.correctness - s.verbosity_penalty - s.fidelity_penalty, 0.0, 1.0);
  return s;
}

enum class Verdict { a, b, tie };

inline Verdict oracle_judge(const VocabLayout& vocab, TokenSpan prompt, TokenSpan ya, TokenSpan yb,
                            double verbosity_weight = 0.5) {
  const double sa = oracle_score(vocab, prompt, ya, verbosity_weight).value;
  const double sb = oracle_score(vocab, prompt, yb, verbosity_weight).value;
  if (sa > sb) return Verdict::a;
  if (sb > sa) return Verdict::b;
  return Verdict::tie;
}

}  // namespace icr::babel
