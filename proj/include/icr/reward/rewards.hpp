#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/lm/forward.hpp"
#include "icr/lm/model.hpp"
#include "icr/rng.hpp"
#include "icr/tokens.hpp"

namespace icr::reward {

enum class Variant { rc, rm, rt };
enum class ReferencePolicy { initial, previous };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::rc: return "rc";
    case Variant::rm: return "rm";
    case Variant::rt: return "rt";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "rc") return Variant::rc;
  if (s == "rm") return Variant::rm;
  if (s == "rt") return Variant::rt;
  fail(ErrorKind::invalid_argument, "unknown reward variant '" + s + "'");
}

inline std::string to_string(ReferencePolicy r) { return r == ReferencePolicy::initial ? "initial" : "previous"; }

inline ReferencePolicy parse_reference(const std::string& s) {
  if (s == "initial") return ReferencePolicy::initial;
  if (s == "previous") return ReferencePolicy::previous;
  fail(ErrorKind::invalid_argument, "unknown reference policy '" + s + "'");
}

struct RewardConfig {
  Variant variant = Variant::rc;
  double beta = 0.1;
  std::vector<double> alpha;  // per language, reward units per response token
  ReferencePolicy reference = ReferencePolicy::initial;
  double translate_noise = 0.0;
  std::uint64_t seed = 0;

  double alpha_for(int lang) const {
    return lang >= 0 && static_cast<std::size_t>(lang) < alpha.size() ? alpha[static_cast<std::size_t>(lang)] : 0.0;
  }

  void validate() const {
    require(beta > 0.0, ErrorKind::invalid_argument, "beta must be positive");
    for (double a : alpha) require(a >= 0.0, ErrorKind::invalid_argument, "alpha must be nonnegative");
    require(translate_noise >= 0.0 && translate_noise <= 1.0, ErrorKind::invalid_argument,
            "translate_noise must lie in [0, 1]");
  }
};

// beta * (log pi(y|x) - log pi_ref(y|x)) with raw (unnormalized) sums.
inline double implicit_reward(const lm::Model& policy, const lm::Model& reference, TokenSpan x, TokenSpan y,
                              double beta) {
  lm::check_same_vocab(policy, reference);
  return beta * (lm::sequence_logprob(policy, x, y) - lm::sequence_logprob(reference, x, y));
}

// G: English stays as is; otherwise prefix_tokens(lang) ++ x_en.
inline TokenSeq map_to_english(const babel::VocabLayout& vocab, int lang, TokenSpan x_en) {
  vocab.check_lang(lang);
  if (lang == babel::kEnglish) return TokenSeq(x_en.begin(), x_en.end());
  return concat(babel::language(vocab, lang).prefix_tokens, x_en);
}

// T: identity on English, otherwise a (possibly noisy) transcoding to English.
inline TokenSeq translate_to_english(const babel::VocabLayout& vocab, int lang, TokenSpan y, double noise,
                                     std::uint64_t seed) {
  vocab.check_lang(lang);
  if (lang == babel::kEnglish) return TokenSeq(y.begin(), y.end());
  return babel::transcode(vocab, y, lang, babel::kEnglish, noise, seed);
}

// One prompt in both renderings.
struct PromptPair {
  int lang = 0;
  TokenSeq native;   // x^l
  TokenSeq english;  // x^en
};

inline PromptPair prompt_pair(const babel::VocabLayout& vocab, const babel::TaskInstance& task, int lang) {
  return {lang, babel::render_prompt(vocab, task, lang), babel::render_prompt(vocab, task, babel::kEnglish)};
}

inline double length_penalty(const RewardConfig& cfg, int lang, std::size_t len) {
  return cfg.alpha_for(lang) * static_cast<double>(len);
}

inline double reward_rc(const lm::Model& policy, const lm::Model& reference, const babel::VocabLayout& vocab,
                        const PromptPair& x, TokenSpan y, const RewardConfig& cfg) {
  const TokenSeq mapped = map_to_english(vocab, x.lang, x.english);
  return implicit_reward(policy, reference, mapped, y, cfg.beta) - length_penalty(cfg, x.lang, y.size());
}

inline double reward_rm(const lm::Model& policy, const lm::Model& reference, const PromptPair& x, TokenSpan y,
                        const RewardConfig& cfg) {
  return implicit_reward(policy, reference, x.native, y, cfg.beta) - length_penalty(cfg, x.lang, y.size());
}

// The penalty uses the untranslated length.
inline double reward_rt(const lm::Model& policy, const lm::Model& reference, const babel::VocabLayout& vocab,
                        const PromptPair& x, TokenSpan y, const RewardConfig& cfg, std::uint64_t noise_seed) {
  const TokenSeq translated = translate_to_english(vocab, x.lang, y, cfg.translate_noise, noise_seed);
  return implicit_reward(policy, reference, x.english, translated, cfg.beta) - length_penalty(cfg, x.lang, y.size());
}

struct SampledResponse {
  int lang = 0;
  std::int64_t prompt_id = 0;
  int sample_id = 0;
  TokenSeq tokens;
};

struct ScoredResponse {
  int lang = 0;
  std::int64_t prompt_id = 0;
  int sample_id = 0;
  TokenSeq tokens;
  double reward = 0.0;      // after the length penalty
  double raw_reward = 0.0;  // log-ratio term only (alpha = 0)
  std::size_t token_count = 0;
};

// The models a round scores with. `previous` is the policy's own predecessor
// (null on the first round, where it coincides with the initial model).
struct RewardModels {
  const lm::Model* policy = nullptr;
  const lm::Model* initial = nullptr;
  const lm::Model* previous = nullptr;

  const lm::Model& reference(ReferencePolicy which) const {
    require(policy && initial, ErrorKind::invalid_argument, "reward models need a policy and an initial model");
    if (which == ReferencePolicy::previous && previous) return *previous;
    return *initial;
  }
};

inline std::uint64_t noise_seed_for(const RewardConfig& cfg, const SampledResponse& r) {
  return derive_seed(cfg.seed, {0x27, static_cast<std::uint64_t>(r.lang), static_cast<std::uint64_t>(r.prompt_id),
                                static_cast<std::uint64_t>(r.sample_id)});
}

// Log-ratio term of the configured variant for one response (no penalty).
inline double raw_score(const lm::Model& policy, const lm::Model& reference, const babel::VocabLayout& vocab,
                        const PromptPair& x, const SampledResponse& r, const RewardConfig& cfg) {
  RewardConfig no_penalty = cfg;
  no_penalty.alpha.clear();
  switch (cfg.variant) {
    case Variant::rc: return reward_rc(policy, reference, vocab, x, r.tokens, no_penalty);
    case Variant::rm: return reward_rm(policy, reference, x, r.tokens, no_penalty);
    case Variant::rt: return reward_rt(policy, reference, vocab, x, r.tokens, no_penalty, noise_seed_for(cfg, r));
  }
  return 0.0;
}

using TaskBook = std::map<std::int64_t, babel::TaskInstance>;

inline TaskBook make_task_book(const std::vector<babel::TaskInstance>& tasks) {
  TaskBook book;
  for (const auto& t : tasks) book.emplace(t.id, t);
  return book;
}

inline ScoredResponse score_one(const RewardModels& models, const babel::VocabLayout& vocab, const TaskBook& tasks,
                                const SampledResponse& r, const RewardConfig& cfg) {
  const auto it = tasks.find(r.prompt_id);
  if (it == tasks.end()) fail(ErrorKind::invalid_argument, "unknown prompt id " + std::to_string(r.prompt_id));
  const PromptPair x = prompt_pair(vocab, it->second, r.lang);
  ScoredResponse s{r.lang, r.prompt_id, r.sample_id, r.tokens, 0.0, 0.0, r.tokens.size()};
  s.raw_reward = raw_score(*models.policy, models.reference(cfg.reference), vocab, x, r, cfg);
  s.reward = s.raw_reward - length_penalty(cfg, r.lang, s.token_count);
  require(std::isfinite(s.reward), ErrorKind::non_finite, "non-finite reward");
  return s;
}

// Scores every response with the configured variant; output order follows
// the input order.
inline std::vector<ScoredResponse> score_pool(const RewardModels& models, const babel::VocabLayout& vocab,
                                              const TaskBook& tasks, const std::vector<SampledResponse>& pool,
                                              const RewardConfig& cfg) {
  cfg.validate();
  std::vector<ScoredResponse> out;
  out.reserve(pool.size());
  for (const auto& r : pool) out.push_back(score_one(models, vocab, tasks, r, cfg));
  return out;
}

// Re-applies a per-language penalty to raw scores.
inline void apply_alpha(std::vector<ScoredResponse>& scored, const std::vector<double>& alpha) {
  for (auto& s : scored) {
    const double a = s.lang >= 0 && static_cast<std::size_t>(s.lang) < alpha.size() ? alpha[static_cast<std::size_t>(s.lang)] : 0.0;
    s.reward = s.raw_reward - a * static_cast<double>(s.token_count);
  }
}

}  // namespace icr::reward
