#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icr/babel/oracle.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/eval/eval.hpp"
#include "icr/lm/model.hpp"
#include "icr/pairs.hpp"
#include "icr/pipeline/config.hpp"
#include "icr/reward/alpha.hpp"
#include "icr/reward/rewards.hpp"
#include "icr/rng.hpp"
#include "icr/train/iterate.hpp"
#include "icr/train/trainer.hpp"

namespace icr::pipeline {

// Prompt-id ranges keep the splits disjoint by construction.
inline constexpr std::int64_t kSftIdBase = 0;
inline constexpr std::int64_t kAlignIdBase = 1'000'000;
inline constexpr std::int64_t kIterateIdBase = 2'000'000;
inline constexpr std::int64_t kIterateIdStride = 100'000;
inline constexpr std::int64_t kEvalIdBase = 9'000'000;
inline constexpr int kMaxRounds = static_cast<int>((kEvalIdBase - kIterateIdBase) / kIterateIdStride) - 1;

// Seed keys; each stage draws from its own stream.
enum SeedKey : std::uint64_t {
  kSeedSftPrompts = 0x101,
  kSeedCorpus = 0x102,
  kSeedAlignPrompts = 0x103,
  kSeedIteratePrompts = 0x104,
  kSeedEvalPrompts = 0x105,
  kSeedInit = 0x201,
  kSeedSft = 0x202,
  kSeedAlignSample = 0x301,
  kSeedAlignTrain = 0x302,
  kSeedEvalDecode = 0x501,
};

struct World {
  babel::VocabLayout vocab;
  std::vector<babel::TaskInstance> sft_prompts;
  std::vector<babel::Demonstration> corpus;
  std::vector<babel::TaskInstance> align_prompts;
  std::vector<babel::TaskInstance> eval_prompts;
};

inline std::vector<babel::TaskInstance> iterate_prompts(const RunConfig& cfg, int round) {
  require(round >= 1 && round <= kMaxRounds, ErrorKind::invalid_argument,
          "round must lie in [1, " + std::to_string(kMaxRounds) + "]");
  require(cfg.world.n_iterate <= kIterateIdStride, ErrorKind::invalid_argument, "n_iterate exceeds the id stride");
  return babel::gen_parallel_prompts(cfg.world, cfg.world.n_iterate,
                                     derive_seed(cfg.seed, {kSeedIteratePrompts, static_cast<std::uint64_t>(round)}),
                                     kIterateIdBase + round * kIterateIdStride);
}

inline World build_world(const RunConfig& cfg) {
  cfg.world.validate();
  require(cfg.world.n_sft <= kAlignIdBase && cfg.world.n_align <= kIterateIdBase - kAlignIdBase,
          ErrorKind::invalid_argument, "split sizes exceed the prompt-id ranges");
  World w{cfg.vocab(), {}, {}, {}, {}};
  w.sft_prompts = babel::gen_parallel_prompts(cfg.world, cfg.world.n_sft, derive_seed(cfg.seed, {kSeedSftPrompts}),
                                              kSftIdBase);
  w.corpus = babel::gen_sft_corpus(w.vocab, w.sft_prompts, cfg.world.defect_rate, cfg.world.crosslingual_fraction,
                                   derive_seed(cfg.seed, {kSeedCorpus}), cfg.world.truncation_rates());
  w.align_prompts = babel::gen_parallel_prompts(cfg.world, cfg.world.n_align,
                                                derive_seed(cfg.seed, {kSeedAlignPrompts}), kAlignIdBase);
  w.eval_prompts = babel::gen_parallel_prompts(cfg.world, cfg.world.n_eval, derive_seed(cfg.seed, {kSeedEvalPrompts}),
                                               kEvalIdBase);
  return w;
}

// Every prompt id a training stage may touch for `rounds` iterations.
inline std::set<std::int64_t> training_ids(const World& w, const RunConfig& cfg, int rounds) {
  std::set<std::int64_t> ids;
  for (const auto& t : w.sft_prompts) ids.insert(t.id);
  for (const auto& t : w.align_prompts) ids.insert(t.id);
  for (int r = 1; r <= rounds; ++r)
    for (const auto& t : iterate_prompts(cfg, r)) ids.insert(t.id);
  return ids;
}

inline lm::Model fresh_model(const RunConfig& cfg) {
  lm::Model m = lm::init_model(cfg.model_config(), derive_seed(cfg.seed, {kSeedInit}), cfg.init_std);
  m.vocab_fingerprint = cfg.vocab().fingerprint();
  return m;
}

// pi_I: supervised fine-tuning on the demonstration corpus.
inline lm::Model train_initial(const RunConfig& cfg, const std::vector<babel::Demonstration>& corpus,
                               train::StepLog* log = nullptr) {
  std::vector<train::SftExample> examples;
  examples.reserve(corpus.size());
  for (const auto& d : corpus) examples.push_back({d.prompt, d.response});
  train::SftConfig sc = cfg.sft;
  sc.seed = derive_seed(cfg.seed, {kSeedSft});
  return train::train_sft(examples, fresh_model(cfg), sc, log);
}

struct AlignResult {
  lm::Model policy;
  PreferenceDataset dataset;
  std::vector<reward::ScoredResponse> scored;
  train::StepLog log;
};

// pi^0: English pairs from pi_I samples, labelled by the oracle, then DPO.
inline AlignResult align_english(const RunConfig& cfg, const babel::VocabLayout& vocab,
                                 const std::vector<babel::TaskInstance>& prompts, const lm::Model& initial) {
  SamplingConfig sc = cfg.sampling;
  sc.n = cfg.align.samples_per_prompt;
  sc.seed = derive_seed(cfg.seed, {kSeedAlignSample});
  const auto pool = train::sample_pool(initial, vocab, prompts, {babel::kEnglish}, sc);
  const auto book = reward::make_task_book(prompts);
  std::vector<reward::ScoredResponse> scored;
  scored.reserve(pool.size());
  for (const auto& r : pool) {
    const TokenSeq prompt = babel::render_prompt(vocab, book.at(r.prompt_id), r.lang);
    const double v = babel::oracle_score(vocab, prompt, r.tokens, cfg.world.verbosity_weight).value;
    scored.push_back({r.lang, r.prompt_id, r.sample_id, r.tokens, v, v, r.tokens.size()});
  }
  Provenance prov;
  prov.iteration = 0;
  prov.variant = "oracle";
  prov.beta = cfg.align.train.beta;
  prov.seeds = {cfg.seed, sc.seed};
  prov.config_hash = stage_hash(cfg, "align-en");
  AlignResult out{initial, forge_dataset(vocab, book, scored, prov), std::move(scored), {}};
  train::TrainConfig tc = cfg.align.train;
  tc.seed = derive_seed(cfg.seed, {kSeedAlignTrain});
  out.policy = train::train_iteration(out.dataset, initial, initial, tc, &out.log);
  return out;
}

inline reward::RewardConfig reward_config(const RunConfig& cfg) {
  reward::RewardConfig rc;
  rc.variant = cfg.reward.variant;
  rc.beta = cfg.reward.beta;
  rc.reference = cfg.reward.reference;
  rc.translate_noise = cfg.reward.translate_noise;
  return rc;
}

inline std::vector<double> alpha_grid(const RunConfig& cfg) {
  return reward::default_alpha_grid(cfg.reward.alpha_grid_points, cfg.reward.alpha_min, cfg.reward.alpha_max);
}

inline train::IterationConfig iteration_config(const RunConfig& cfg) {
  train::IterationConfig ic;
  ic.iterations = cfg.iterations;
  ic.sampling = cfg.sampling;
  ic.reward = reward_config(cfg);
  ic.optimize_alpha = cfg.reward.optimize_alpha;
  ic.alpha_grid = alpha_grid(cfg);
  ic.train = cfg.train;
  ic.seed = cfg.seed;
  ic.config_hash = stage_hash(cfg, "iterate");
  return ic;
}

inline train::IterationState iterate(const RunConfig& cfg, const lm::Model& initial, const lm::Model& start,
                                     const train::RoundSink& sink = {}) {
  require(cfg.iterations <= kMaxRounds, ErrorKind::invalid_argument,
          "iterations must be <= " + std::to_string(kMaxRounds));
  return train::run_algorithm1(initial, start, cfg.vocab(), [&](int t) { return iterate_prompts(cfg, t); },
                               iteration_config(cfg), sink);
}

// Sampling settings of round t; reward-acc reuses round 1 so that it scores
// the very pools the first iteration trains on.
inline SamplingConfig round_sampling(const RunConfig& cfg, int round) {
  SamplingConfig sc = cfg.sampling;
  sc.seed = train::round_seed(cfg.seed, train::kRoundSample, round);
  return sc;
}

struct VariantAccuracy {
  reward::Variant variant = reward::Variant::rc;
  std::vector<double> alpha;
  PreferenceDataset dataset;
  std::vector<reward::ScoredResponse> scored;
  eval::RewardAccuracyReport report;
};

// Accuracy of Rc, Rm and Rt pairs against the oracle on pi^0 pools of the
// first iteration's prompts. Rt uses the reward-acc translation noise.
inline std::vector<VariantAccuracy> reward_acc(const RunConfig& cfg, const lm::Model& initial, const lm::Model& policy,
                                               const std::vector<reward::Variant>& variants = {
                                                   reward::Variant::rc, reward::Variant::rm, reward::Variant::rt}) {
  const auto vocab = cfg.vocab();
  const auto tasks = iterate_prompts(cfg, 1);
  const auto book = reward::make_task_book(tasks);
  const auto pool = train::sample_pool(policy, vocab, tasks, train::all_languages(vocab), round_sampling(cfg, 1));
  const reward::RewardModels models{&policy, &initial, nullptr};
  std::vector<VariantAccuracy> out;
  for (auto v : variants) {
    reward::RewardConfig rc = reward_config(cfg);
    rc.variant = v;
    rc.translate_noise = cfg.reward_acc.translate_noise;
    rc.seed = train::round_seed(cfg.seed, train::kRoundReward, 1);
    VariantAccuracy va;
    va.variant = v;
    va.scored = reward::score_pool(models, vocab, book, pool, rc);
    va.alpha.assign(static_cast<std::size_t>(vocab.num_langs()), 0.0);
    if (cfg.reward.optimize_alpha)
      va.alpha = reward::optimize_alpha_per_language(va.scored, vocab.num_langs(), alpha_grid(cfg));
    reward::apply_alpha(va.scored, va.alpha);
    Provenance prov;
    prov.iteration = 1;
    prov.variant = reward::to_string(v);
    prov.beta = rc.beta;
    prov.alpha = va.alpha;
    prov.seeds = {cfg.seed, round_sampling(cfg, 1).seed, rc.seed};
    prov.config_hash = stage_hash(cfg, "reward-acc");
    va.dataset = forge_dataset(vocab, book, va.scored, prov);
    va.report = eval::reward_accuracy(va.dataset.pairs, vocab, cfg.world.verbosity_weight);
    out.push_back(std::move(va));
  }
  return out;
}

inline eval::DecodeConfig decode_config(const RunConfig& cfg) {
  eval::DecodeConfig dc = cfg.eval;
  dc.seed = derive_seed(cfg.seed, {kSeedEvalDecode});
  return dc;
}

struct EvalResult {
  eval::WinRateReport report;
  eval::LengthStats lengths;
};

inline EvalResult evaluate(const RunConfig& cfg, const World& w, const lm::Model& candidate, const lm::Model& baseline,
                           const std::string& baseline_name, int rounds_trained) {
  const auto dc = decode_config(cfg);
  EvalResult r;
  r.report = eval::winrate(candidate, baseline, w.vocab, w.eval_prompts, dc, training_ids(w, cfg, rounds_trained),
                           cfg.world.verbosity_weight, baseline_name);
  r.lengths = eval::length_stats(eval::decode_all(candidate, w.vocab, w.eval_prompts, dc));
  return r;
}

}  // namespace icr::pipeline
