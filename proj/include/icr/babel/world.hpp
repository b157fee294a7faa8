#pragma once

#include <algorithm>
#include <iterator>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/error.hpp"
#include "icr/rng.hpp"
#include "icr/tokens.hpp"

namespace icr::babel {

// The task: emit the prompt's content tokens sorted ascending, then EOS.
struct TaskInstance {
  std::int64_t id = 0;
  std::vector<int> content;  // distinct content indices in prompt order

  std::vector<int> sorted_content() const {
    auto s = content;
    std::sort(s.begin(), s.end());
    return s;
  }

  bool operator==(const TaskInstance&) const = default;
};

inline TokenSeq render_content(const VocabLayout& vocab, const std::vector<int>& content, int lang) {
  TokenSeq out;
  out.reserve(content.size());
  for (int c : content) out.push_back(vocab.encode(lang, c));
  return out;
}

// BOS tag(lang) content... SEP
inline TokenSeq render_prompt(const VocabLayout& vocab, const TaskInstance& task, int lang) {
  TokenSeq p{kBos, vocab.tag(lang)};
  for (Token t : render_content(vocab, task.content, lang)) p.push_back(t);
  p.push_back(kSep);
  return p;
}

inline TokenSeq ideal_response(const VocabLayout& vocab, const TaskInstance& task, int lang) {
  TokenSeq r = render_content(vocab, task.sorted_content(), lang);
  r.push_back(kEos);
  return r;
}

// Re-maps content tokens of block `from` into block `to`. With probability
// `noise` each re-mapped token is replaced by a uniform draw from block `to`.
// Specials, tags, and tokens of other blocks pass through.
inline TokenSeq transcode(const VocabLayout& vocab, TokenSpan y, int from, int to, double noise,
                          std::uint64_t seed) {
  vocab.check_lang(from);
  vocab.check_lang(to);
  require(noise >= 0.0 && noise <= 1.0, ErrorKind::invalid_argument, "noise rate must lie in [0, 1]");
  Rng rng(derive_seed(seed, {0x7C0DE}));
  TokenSeq out;
  out.reserve(y.size());
  for (Token t : y) {
    const auto id = vocab.decode(t);
    if (!id || id->lang != from) {
      out.push_back(t);
      continue;
    }
    Token mapped = vocab.encode(to, id->index);
    if (noise > 0.0 && rng.bernoulli(noise))
      mapped = vocab.encode(to, static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.alphabet()))));
    out.push_back(mapped);
  }
  return out;
}

struct WorldConfig {
  int num_langs = 4;
  int alphabet = 16;
  int k_min = 3;
  int k_max = 10;
  double defect_rate = 0.5;
  double crosslingual_fraction = 0.7;
  // Probability that a demonstration stops one item early; non-English
  // demonstrations are of lower quality.
  double truncation_rate_en = 0.3;
  double truncation_rate_other = 0.85;
  double verbosity_weight = 0.5;
  // Prompt split sizes (per language, parallel).
  int n_sft = 2000;
  int n_align = 400;
  int n_iterate = 300;
  int n_eval = 150;

  void validate() const {
    require(num_langs >= 2 && alphabet >= 4, ErrorKind::invalid_argument, "world needs L >= 2, m >= 4");
    require(k_min >= 1 && k_min <= k_max && k_max <= alphabet, ErrorKind::invalid_argument,
            "content length bounds must satisfy 1 <= k_min <= k_max <= m");
    require(defect_rate >= 0 && defect_rate <= 1 && crosslingual_fraction >= 0 && crosslingual_fraction <= 1,
            ErrorKind::invalid_argument, "defect rate and cross-lingual fraction must lie in [0, 1]");
    require(truncation_rate_en >= 0 && truncation_rate_en <= 1 && truncation_rate_other >= 0 &&
                truncation_rate_other <= 1,
            ErrorKind::invalid_argument, "truncation rates must lie in [0, 1]");
  }

  std::vector<double> truncation_rates() const {
    std::vector<double> r(static_cast<std::size_t>(num_langs), truncation_rate_other);
    r[kEnglish] = truncation_rate_en;
    return r;
  }
};

// n task instances with ids first_id.., each rendered in every language by
// render_prompt; the renderings are parallel by construction.
inline std::vector<TaskInstance> gen_parallel_prompts(const WorldConfig& cfg, int n, std::uint64_t seed,
                                                      std::int64_t first_id = 0) {
  cfg.validate();
  require(n >= 1, ErrorKind::invalid_argument, "gen_parallel_prompts needs n >= 1");
  Rng rng(derive_seed(seed, {0x9A7A}));
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<int> pool(static_cast<std::size_t>(cfg.alphabet));
  for (int i = 0; i < n; ++i) {
    const int k = rng.range(cfg.k_min, cfg.k_max);
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool.begin(), pool.end());
    out.push_back(TaskInstance{first_id + i, std::vector<int>(pool.begin(), pool.begin() + k)});
  }
  return out;
}

struct Demonstration {
  int lang = 0;
  std::int64_t prompt_id = 0;
  TokenSeq prompt;
  TokenSeq response;
  bool corrupted = false;
  bool crosslingual = false;
  bool truncated = false;
};

// Drops the last content token (the EOS stays). Responses with fewer than two
// content tokens are left alone.
inline bool truncate_response(const VocabLayout& vocab, TokenSeq& y) {
  std::size_t content = 0;
  for (Token t : y) content += vocab.is_content(t) ? 1 : 0;
  if (content < 2) return false;
  for (auto it = y.rbegin(); it != y.rend(); ++it)
    if (vocab.is_content(*it)) {
      y.erase(std::next(it).base());
      return true;
    }
  return false;
}

// One or two edits (adjacent transposition or random in-block insertion),
// always yielding a response different from the ideal.
inline TokenSeq corrupt_response(const VocabLayout& vocab, const TokenSeq& ideal, int lang, Rng& rng) {
  TokenSeq body(ideal.begin(), ideal.end() - 1);
  for (;;) {
    TokenSeq r = body;
    const int edits = 1 + static_cast<int>(rng.below(2));
    for (int e = 0; e < edits; ++e) {
      if (r.size() >= 2 && rng.bernoulli(0.5)) {
        const auto i = rng.below(r.size() - 1);
        std::swap(r[i], r[i + 1]);
      } else {
        const auto pos = rng.below(r.size() + 1);
        const Token t = vocab.encode(lang, static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.alphabet()))));
        r.insert(r.begin() + static_cast<std::ptrdiff_t>(pos), t);
      }
    }
    if (r != body) {
      r.push_back(kEos);
      return r;
    }
  }
}

// For each prompt and language one demonstration. With probability
// crosslingual_fraction a non-English demonstration uses the cross-lingual
// prompt tag(lang) ++ English prompt; with probability defect_rate the
// response is corrupted. truncation[lang] (absent = 0) is the chance that
// the response then also stops one item early.
inline std::vector<Demonstration> gen_sft_corpus(const VocabLayout& vocab, const std::vector<TaskInstance>& tasks,
                                                 double defect_rate, double crosslingual_fraction,
                                                 std::uint64_t seed, const std::vector<double>& truncation = {}) {
  require(defect_rate >= 0 && defect_rate <= 1 && crosslingual_fraction >= 0 && crosslingual_fraction <= 1,
          ErrorKind::invalid_argument, "defect rate and cross-lingual fraction must lie in [0, 1]");
  Rng rng(derive_seed(seed, {0x5F7}));
  std::vector<Demonstration> out;
  out.reserve(tasks.size() * static_cast<std::size_t>(vocab.num_langs()));
  for (const auto& task : tasks) {
    for (int lang = 0; lang < vocab.num_langs(); ++lang) {
      Demonstration d;
      d.lang = lang;
      d.prompt_id = task.id;
      d.crosslingual = lang != kEnglish && rng.bernoulli(crosslingual_fraction);
      if (d.crosslingual) {
        d.prompt = {vocab.tag(lang)};
        for (Token t : render_prompt(vocab, task, kEnglish)) d.prompt.push_back(t);
      } else {
        d.prompt = render_prompt(vocab, task, lang);
      }
      d.response = ideal_response(vocab, task, lang);
      d.corrupted = rng.bernoulli(defect_rate);
      if (d.corrupted) d.response = corrupt_response(vocab, d.response, lang, rng);
      const double tr = static_cast<std::size_t>(lang) < truncation.size() ? truncation[static_cast<std::size_t>(lang)] : 0.0;
      if (tr > 0.0 && rng.bernoulli(tr)) d.truncated = truncate_response(vocab, d.response);
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace icr::babel
