#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/lm/model.hpp"
#include "icr/pairs.hpp"
#include "icr/reward/alpha.hpp"
#include "icr/reward/rewards.hpp"
#include "icr/rng.hpp"
#include "icr/sampler.hpp"
#include "icr/train/trainer.hpp"

namespace icr::train {

// Index of one (lang, prompt) for seeding; independent of iteration order.
inline std::uint64_t prompt_stream(int lang, std::int64_t prompt_id) {
  return derive_seed(static_cast<std::uint64_t>(prompt_id), {static_cast<std::uint64_t>(lang)});
}

// N responses per (task, language) for the given languages.
inline std::vector<reward::SampledResponse> sample_pool(const lm::Model& model, const babel::VocabLayout& vocab,
                                                        const std::vector<babel::TaskInstance>& tasks,
                                                        const std::vector<int>& langs, const SamplingConfig& cfg) {
  std::vector<reward::SampledResponse> out;
  out.reserve(tasks.size() * langs.size() * static_cast<std::size_t>(cfg.n));
  for (int lang : langs)
    for (const auto& t : tasks) {
      const TokenSeq prompt = babel::render_prompt(vocab, t, lang);
      auto ys = sample_responses(model, prompt, cfg, prompt_stream(lang, t.id));
      for (int s = 0; s < static_cast<int>(ys.size()); ++s)
        out.push_back({lang, t.id, s, std::move(ys[static_cast<std::size_t>(s)])});
    }
  return out;
}

// Per-round streams for sampling, reward noise, and batch order.
inline std::uint64_t round_seed(std::uint64_t seed, std::uint64_t key, int round) {
  return derive_seed(seed, {key, static_cast<std::uint64_t>(round)});
}
inline constexpr std::uint64_t kRoundSample = 0x5A, kRoundReward = 0x5C, kRoundTrain = 0x57;

inline std::vector<int> all_languages(const babel::VocabLayout& vocab) {
  std::vector<int> langs;
  for (int l = 0; l < vocab.num_langs(); ++l) langs.push_back(l);
  return langs;
}

struct IterationConfig {
  int iterations = 2;
  SamplingConfig sampling;
  reward::RewardConfig reward;
  bool optimize_alpha = true;
  std::vector<double> alpha_grid = reward::default_alpha_grid();
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct RoundMetrics {
  int round = 0;
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  std::map<int, std::size_t> counts;
  std::vector<double> alpha;
  double loss_first = 0.0;
  double loss_last = 0.0;
  double mean_margin = 0.0;  // mean chosen_reward - rejected_reward
};

// Everything one round produced; handed to the caller for persistence.
struct RoundOutput {
  int round = 0;
  const lm::Model* policy = nullptr;
  const PreferenceDataset* dataset = nullptr;
  const std::vector<reward::ScoredResponse>* scored = nullptr;
  const StepLog* log = nullptr;
  const RoundMetrics* metrics = nullptr;
};

struct IterationState {
  int round = 0;
  lm::Model policy;
  std::vector<RoundMetrics> history;
};

using PromptSource = std::function<std::vector<babel::TaskInstance>(int round)>;
using RoundSink = std::function<void(const RoundOutput&)>;

// Rounds t = 1..T: sample with pi^{t-1}, score with the configured reward
// built from (pi^{t-1}, reference), fit alpha, forge D_t, then train pi^t
// from pi^{t-1} with pi^{t-1} as the loss-side reference. `previous` as the
// reward reference means the policy's predecessor pi^{t-2} (pi_I at t = 1).
inline IterationState run_algorithm1(const lm::Model& initial, const lm::Model& start, const babel::VocabLayout& vocab,
                                     const PromptSource& prompts, const IterationConfig& cfg,
                                     const RoundSink& sink = {}) {
  require(cfg.iterations >= 0, ErrorKind::invalid_argument, "iterations must be >= 0");
  lm::check_same_vocab(initial, start);
  IterationState state{0, start, {}};
  lm::Model predecessor = initial;
  const auto langs = all_languages(vocab);
  for (int t = 1; t <= cfg.iterations; ++t) {
    const auto tasks = prompts(t);
    require(!tasks.empty(), ErrorKind::empty_input, "round " + std::to_string(t) + " has no prompts");
    const auto book = reward::make_task_book(tasks);

    SamplingConfig sc = cfg.sampling;
    sc.seed = round_seed(cfg.seed, kRoundSample, t);
    const auto pool = sample_pool(state.policy, vocab, tasks, langs, sc);

    reward::RewardConfig rc = cfg.reward;
    rc.alpha.clear();
    rc.seed = round_seed(cfg.seed, kRoundReward, t);
    const reward::RewardModels models{&state.policy, &initial, t >= 2 ? &predecessor : nullptr};
    auto scored = reward::score_pool(models, vocab, book, pool, rc);
    std::vector<double> alpha(static_cast<std::size_t>(vocab.num_langs()), 0.0);
    if (cfg.optimize_alpha) alpha = reward::optimize_alpha_per_language(scored, vocab.num_langs(), cfg.alpha_grid);
    reward::apply_alpha(scored, alpha);

    Provenance prov;
    prov.iteration = t;
    prov.variant = reward::to_string(rc.variant);
    prov.beta = rc.beta;
    prov.alpha = alpha;
    prov.seeds = {cfg.seed, sc.seed, rc.seed};
    prov.config_hash = cfg.config_hash;
    const PreferenceDataset data = forge_dataset(vocab, book, scored, prov);

    TrainConfig tc = cfg.train;
    tc.seed = round_seed(cfg.seed, kRoundTrain, t);
    StepLog log;
    lm::Model next = train_iteration(data, state.policy, state.policy, tc, &log);

    RoundMetrics m;
    m.round = t;
    m.pairs = data.size();
    m.skipped = data.provenance.skipped;
    m.counts = data.counts;
    m.alpha = alpha;
    m.loss_first = log.front().loss;
    m.loss_last = log.back().loss;
    for (const auto& p : data.pairs) m.mean_margin += p.chosen_reward - p.rejected_reward;
    m.mean_margin /= static_cast<double>(data.size());

    predecessor = std::move(state.policy);
    state.policy = std::move(next);
    state.round = t;
    state.history.push_back(m);
    if (sink) sink({t, &state.policy, &data, &scored, &log, &state.history.back()});
  }
  return state;
}

}  // namespace icr::train
