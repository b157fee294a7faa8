#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/lm/model.hpp"
#include "icr/pairs.hpp"
#include "icr/rng.hpp"
#include "icr/train/losses.hpp"
#include "icr/train/trainer.hpp"

namespace icr::pipeline {

struct GradCheckRow {
  std::string mode;
  std::string loss;
  train::GradCheckResult result;
};

// Small desk world: short random pairs over a 2-language, 6-letter vocabulary.
inline std::vector<PreferencePair> gradcheck_pairs(const babel::VocabLayout& vocab, int n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6C1}));
  babel::WorldConfig wc;
  wc.num_langs = vocab.num_langs();
  wc.alphabet = vocab.alphabet();
  wc.k_min = 2;
  wc.k_max = 4;
  const auto tasks = babel::gen_parallel_prompts(wc, n, derive_seed(seed, {0x6C2}));
  auto random_response = [&](int lang) {
    TokenSeq y;
    const int len = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < len; ++i)
      y.push_back(vocab.encode(lang, static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.alphabet())))));
    y.push_back(babel::kEos);
    return y;
  };
  std::vector<PreferencePair> pairs;
  for (const auto& t : tasks) {
    const int lang = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.num_langs())));
    PreferencePair p;
    p.lang = lang;
    p.prompt_id = t.id;
    p.prompt = babel::render_prompt(vocab, t, lang);
    p.chosen = babel::ideal_response(vocab, t, lang);
    p.rejected = random_response(lang);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// Analytic vs central-difference gradients of every preference loss on a
// seeded desk transformer and a bigram model. The policy is drawn away from
// the reference so that every loss term is active.
inline std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed, std::size_t probes = 200, double eps = 1e-5,
                                               double beta = 0.5) {
  const auto vocab = babel::make_vocab(2, 6);
  const auto pairs = gradcheck_pairs(vocab, 6, seed);
  std::vector<GradCheckRow> rows;
  for (auto mode : {lm::ModelMode::transformer, lm::ModelMode::bigram}) {
    lm::ModelConfig mc;
    mc.mode = mode;
    mc.vocab_size = vocab.vocab_size();
    mc.context_len = 16;
    mc.d_model = 8;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.mlp_ratio = 2;
    const lm::Model reference = lm::init_model(mc, derive_seed(seed, {0x6C3}), 0.3);
    const lm::Model policy = lm::init_model(mc, derive_seed(seed, {0x6C4}), 0.3);
    const auto pair_ex = train::make_pair_examples(reference, pairs);
    const auto kto_ex = train::make_kto_examples(reference, pairs);
    const double z = train::estimate_zref(policy, reference, kto_ex, beta);
    for (auto loss : {train::LossKind::dpo, train::LossKind::dpo_nll, train::LossKind::kto}) {
      auto f = [&](const lm::Model& m, bool need_grad) {
        if (loss == train::LossKind::kto) return train::kto_loss(m, kto_ex, beta, 1.0, 1.0, z, need_grad);
        return train::dpo_family_loss(m, pair_ex, beta, loss == train::LossKind::dpo_nll, need_grad);
      };
      rows.push_back({lm::to_string(mode), train::to_string(loss),
                      train::finite_difference_check(policy, f, probes, eps, derive_seed(seed, {0x6C5}))});
    }
  }
  return rows;
}

}  // namespace icr::pipeline
