#include <algorithm>
#include <cmath>
#include <tuple>

#include "test_util.hpp"

using namespace icr;
using namespace icr::testing;

namespace {

std::vector<PreferencePair> random_pairs(Rng& rng, int vocab, int n) {
  std::vector<PreferencePair> out;
  for (int i = 0; i < n; ++i) {
    PreferencePair p;
    p.lang = 0;
    p.prompt_id = i;
    p.prompt = random_tokens(rng, vocab, rng.range(2, 5));
    p.chosen = random_tokens(rng, vocab, rng.range(1, 6));
    p.rejected = random_tokens(rng, vocab, rng.range(1, 6));
    out.push_back(p);
  }
  return out;
}

double log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }
double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Anchors, IdenticalModels) {
  Rng rng(1);
  for (auto mode : {lm::ModelMode::transformer, lm::ModelMode::bigram}) {
    const auto m = random_model(tiny_config(mode, 10), 2, 0.5);
    const auto pairs = random_pairs(rng, 10, 8);
    const auto ex = train::make_pair_examples(m, pairs);
    EXPECT_NEAR(train::dpo_loss(m, ex, 0.1).value, std::log(2.0), 1e-12);
    const auto kto = train::make_kto_examples(m, pairs);
    const double z = train::estimate_zref(m, m, kto, 0.1);
    EXPECT_EQ(z, 0.0);
    EXPECT_NEAR(train::kto_loss(m, kto, 0.1, 1.0, 1.0, z).value, 0.5, 1e-12);
    for (const auto& p : pairs) {
      EXPECT_EQ(reward::implicit_reward(m, m, p.prompt, p.chosen, 0.1), 0.0);
      EXPECT_NEAR(train::preference_prob(m, m, p.prompt, p.chosen, p.rejected, 0.1), 0.5, 1e-12);
    }
  }
}

TEST(Losses, HandComputedOnUniformBigram) {
  // zero table: log pi(y|x) = -|y| ln V
  lm::ModelConfig c = tiny_config(lm::ModelMode::bigram, 5);
  const lm::Model m(c);
  const double lv = std::log(5.0);
  std::vector<train::PairExample> batch{
      {{0, 1}, {2, 3, 4}, {2}, -2.0, -1.5},
      {{0}, {1}, {3, 3}, -1.0, -4.0},
  };
  const double beta = 0.3;
  double dpo = 0.0, nll = 0.0;
  for (const auto& e : batch) {
    const double lw = -static_cast<double>(e.chosen.size()) * lv, ll = -static_cast<double>(e.rejected.size()) * lv;
    dpo -= log_sigmoid(beta * ((lw - e.ref_chosen) - (ll - e.ref_rejected)));
    nll += lv;  // -log pi(y+) / |y+| = ln V
  }
  const auto r = train::dpo_nll_loss(m, batch, beta);
  EXPECT_NEAR(r.components.at("dpo"), dpo / 2, 1e-14);
  EXPECT_NEAR(r.components.at("nll"), nll / 2, 1e-14);
  EXPECT_NEAR(r.value, (dpo + nll) / 2, 1e-14);
  EXPECT_NEAR(train::dpo_loss(m, batch, beta).value, dpo / 2, 1e-14);

  std::vector<train::KtoExample> kb{{{0}, {1, 2}, true, -2.5}, {{0}, {3}, false, -0.5}, {{1}, {4, 4, 4}, false, -6.0}};
  const double z = 0.2, lw = 1.5, ll = 0.7;
  double kto = 0.0;
  for (const auto& e : kb) {
    const double rr = beta * (-static_cast<double>(e.response.size()) * lv - e.ref_logp);
    kto += e.desirable ? lw * (1 - sig(rr - z)) : ll * (1 - sig(z - rr));
  }
  EXPECT_NEAR(train::kto_loss(m, kb, beta, lw, ll, z).value, kto / 3, 1e-14);
}

TEST(Losses, ZrefHandComputed) {
  const auto pol = random_model(tiny_config(lm::ModelMode::bigram, 6), 3, 1.0);
  const auto ref = random_model(tiny_config(lm::ModelMode::bigram, 6), 4, 1.0);
  std::vector<train::KtoExample> b{{{2}, {5, 1}, true, 0}, {{0, 1}, {3}, false, 0}, {{0, 1}, {2, 2}, true, 0}};
  // canonical order by (prompt, response, desirable): {0,1}/{2,2}, {0,1}/{3}, {2}/{5,1}
  const std::vector<std::pair<TokenSeq, TokenSeq>> mismatched{
      {{0, 1}, {3}}, {{0, 1}, {5, 1}}, {{2}, {2, 2}}};
  const double beta = 0.7;
  double s = 0.0;
  for (const auto& [x, y] : mismatched) s += beta * (reference_logprob(pol, x, y) - reference_logprob(ref, x, y));
  EXPECT_NEAR(train::estimate_zref(pol, ref, b, beta), std::max(0.0, s / 3), 1e-12);
  // the order of the batch does not matter
  std::vector<train::KtoExample> r{b[2], b[0], b[1]};
  EXPECT_EQ(train::estimate_zref(pol, ref, r, beta), train::estimate_zref(pol, ref, b, beta));
  // clamp at zero: swapping roles flips the sign of the unclamped mean
  const double flipped = train::estimate_zref(ref, pol, b, beta);
  EXPECT_TRUE(s > 0 ? flipped == 0.0 : flipped > 0.0);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (auto mode : {lm::ModelMode::transformer, lm::ModelMode::bigram}) {
    const auto ref = random_model(tiny_config(mode, 10), 6, 0.3);
    const auto pol = random_model(tiny_config(mode, 10), 7, 0.3);
    const auto pairs = random_pairs(rng, 10, 5);
    const auto ex = train::make_pair_examples(ref, pairs);
    const auto kex = train::make_kto_examples(ref, pairs);
    const double z = train::estimate_zref(pol, ref, kex, 0.5);
    auto check = [&](const std::function<train::LossResult(const lm::Model&, bool)>& f) {
      return train::finite_difference_check(pol, f, 200, 1e-5, 8);
    };
    const auto a = check([&](const lm::Model& m, bool g) { return train::dpo_loss(m, ex, 0.5, g); });
    const auto b = check([&](const lm::Model& m, bool g) { return train::dpo_nll_loss(m, ex, 0.5, g); });
    const auto c = check([&](const lm::Model& m, bool g) { return train::kto_loss(m, kex, 0.5, 1.0, 1.0, z, g); });
    std::vector<train::SftExample> sft;
    for (const auto& p : pairs) sft.push_back({p.prompt, p.chosen});
    const auto d = check([&](const lm::Model& m, bool g) { return train::sft_loss(m, sft, g); });
    for (const auto& r : {a, b, c, d}) {
      EXPECT_LT(r.max_rel_error, 1e-4);
      EXPECT_GT(r.nonzero, 0u);
    }
  }
}

TEST(Losses, Errors) {
  const auto m = random_model(tiny_config(lm::ModelMode::bigram, 6), 9);
  std::vector<train::PairExample> none;
  EXPECT_EQ(error_kind_of([&] { train::dpo_loss(m, none, 0.1); }), ErrorKind::empty_input);
  std::vector<train::PairExample> one{{{0}, {1}, {2}, 0, 0}};
  EXPECT_EQ(error_kind_of([&] { train::dpo_loss(m, one, 0.0); }), ErrorKind::invalid_argument);
  std::vector<train::KtoExample> knone;
  EXPECT_EQ(error_kind_of([&] { train::kto_loss(m, knone, 0.1, 1, 1, 0); }), ErrorKind::empty_input);
  EXPECT_EQ(error_kind_of([&] { train::estimate_zref(m, m, knone, 0.1); }), ErrorKind::empty_input);
}

TEST(Trainer, BatchesCoverEveryItemEachEpoch) {
  const auto b = train::make_batches(10, 4, 2, 3);
  ASSERT_EQ(b.size(), 6u);
  for (int e = 0; e < 2; ++e) {
    std::vector<std::size_t> all;
    for (int i = 0; i < 3; ++i) all.insert(all.end(), b[static_cast<std::size_t>(3 * e + i)].begin(), b[static_cast<std::size_t>(3 * e + i)].end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  }
  EXPECT_EQ(b[2].size(), 2u);
  EXPECT_EQ(b, train::make_batches(10, 4, 2, 3));
}

TEST(Trainer, DeterministicAndImprovesPreference) {
  Rng rng(10);
  const auto ref = random_model(tiny_config(lm::ModelMode::transformer, 10), 11, 0.3);
  const auto data = aggregate(random_pairs(rng, 10, 24));
  for (auto loss : {train::LossKind::dpo, train::LossKind::dpo_nll, train::LossKind::kto}) {
    train::TrainConfig tc;
    tc.loss = loss;
    tc.peak_lr = 1e-2;
    tc.batch_size = 8;
    tc.epochs = 4;
    tc.beta = 0.5;
    tc.seed = 12;
    train::StepLog log;
    const auto a = train::train_iteration(data, ref, ref, tc, &log);
    const auto b = train::train_iteration(data, ref, ref, tc);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(log.size(), 12u);
    EXPECT_EQ(log.front().lr, 0.0);
    // the full-dataset objective drops; DPO starts from ln 2
    const auto ex = train::make_pair_examples(ref, data.pairs);
    if (loss == train::LossKind::dpo_nll)
      EXPECT_LT(train::dpo_nll_loss(a, ex, 0.5, false).value, train::dpo_nll_loss(ref, ex, 0.5, false).value - 0.01);
    else
      EXPECT_LT(train::dpo_loss(a, ex, 0.5, false).value, std::log(2.0) - 0.01) << train::to_string(loss);
    tc.seed = 13;
    EXPECT_NE(train::train_iteration(data, ref, ref, tc).params, a.params);
  }
  EXPECT_EQ(error_kind_of([&] { train::train_iteration({}, ref, ref, {}); }), ErrorKind::empty_input);
}

TEST(Trainer, SftLowersCorpusLoss) {
  Rng rng(14);
  const auto start = random_model(tiny_config(lm::ModelMode::transformer, 10), 15, 0.1);
  std::vector<train::SftExample> corpus;
  for (int i = 0; i < 16; ++i) corpus.push_back({random_tokens(rng, 10, 3), {4, 5, 1}});
  train::SftConfig sc;
  sc.peak_lr = 1e-2;
  sc.batch_size = 4;
  sc.epochs = 20;
  const auto before = train::sft_loss(start, corpus, false).value;
  const auto m = train::train_sft(corpus, start, sc);
  EXPECT_LT(train::sft_loss(m, corpus, false).value, before - 0.5);
  EXPECT_EQ(m.params, train::train_sft(corpus, start, sc).params);
}
