#include <cmath>

#include "test_util.hpp"

using namespace icr;
using namespace icr::testing;

namespace {

// Bigram that answers every prompt with `answer` and then EOS.
lm::Model scripted_bigram(const babel::VocabLayout& v, const TokenSeq& answer) {
  lm::ModelConfig c;
  c.mode = lm::ModelMode::bigram;
  c.vocab_size = v.vocab_size();
  c.context_len = 32;
  lm::Model m(c);
  const auto& seg = m.layout.find("table");
  const std::size_t V = static_cast<std::size_t>(v.vocab_size());
  auto set = [&](Token from, Token to) { m.params[seg.offset + static_cast<std::size_t>(from) * V + static_cast<std::size_t>(to)] = 50.0; };
  Token prev = babel::kSep;
  for (Token t : answer) {
    set(prev, t);
    prev = t;
  }
  set(prev, babel::kEos);
  return m;
}

}  // namespace

TEST(WinRate, SelfComparisonIsOneHalf) {
  const auto v = babel::make_vocab(3, 6);
  babel::WorldConfig wc;
  wc.num_langs = 3;
  wc.alphabet = 6;
  wc.k_min = 2;
  wc.k_max = 4;
  const auto tasks = babel::gen_parallel_prompts(wc, 20, 1);
  const auto m = random_model(tiny_config(lm::ModelMode::transformer, v.vocab_size(), 24), 2, 0.5);
  eval::DecodeConfig dc;
  dc.max_new_tokens = 8;
  for (bool greedy : {true, false}) {
    dc.greedy = greedy;
    const auto r = eval::winrate(m, m, v, tasks, dc);
    for (const auto& [lang, row] : r.per_lang) {
      EXPECT_EQ(row.ties, 20u);
      EXPECT_EQ(row.win_rate(), 0.5);
    }
    EXPECT_EQ(r.mean_win_rate(true), 0.5);
  }
}

TEST(WinRate, IdealBeatsEmpty) {
  const auto v = babel::make_vocab(2, 4);
  std::vector<babel::TaskInstance> tasks;
  for (int i = 0; i < 10; ++i) tasks.push_back({100 + i, {0}});
  const auto ideal = scripted_bigram(v, {v.encode(0, 0)});
  const auto empty = scripted_bigram(v, {});
  eval::DecodeConfig dc;
  dc.max_new_tokens = 4;
  ASSERT_EQ(eval::decode_all(ideal, v, tasks, dc).at({0, 100}), babel::ideal_response(v, tasks[0], 0));
  const auto r = eval::winrate(ideal, empty, v, tasks, dc, {}, 0.5, "empty");
  EXPECT_EQ(r.per_lang.at(0).win_rate(), 1.0);
  // the English answer is off-language for l1: both score 0
  EXPECT_EQ(r.per_lang.at(1).ties, 10u);
  EXPECT_EQ(r.mean_win_rate(true), 0.5);
  EXPECT_EQ(r.mean_win_rate(false), 0.75);
  EXPECT_EQ(r.baseline, "empty");
  EXPECT_EQ(eval::winrate(empty, ideal, v, tasks, dc).per_lang.at(0).win_rate(), 0.0);
  const auto scores = eval::mean_oracle_score(ideal, v, tasks, dc);
  EXPECT_EQ(scores.at(0), 1.0);
  EXPECT_EQ(scores.at(1), 0.0);
}

TEST(WinRate, RejectsTrainingPrompts) {
  const auto v = babel::make_vocab(2, 4);
  const std::vector<babel::TaskInstance> tasks{{5, {1, 2}}};
  const auto m = scripted_bigram(v, {});
  EXPECT_EQ(error_kind_of([&] { eval::winrate(m, m, v, tasks, {}, {4, 5}); }), ErrorKind::prompt_overlap);
  EXPECT_NO_THROW(eval::winrate(m, m, v, tasks, {}, {4, 6}));
}

TEST(RewardAccuracy, OraclePairsAreAlwaysCorrect) {
  const auto v = babel::make_vocab(4, 16);
  babel::WorldConfig wc;
  const auto tasks = babel::gen_parallel_prompts(wc, 200, 3);
  Rng rng(4);
  std::vector<PreferencePair> pairs;
  for (const auto& t : tasks)
    for (int l = 0; l < 4; ++l) {
      const auto ideal = babel::ideal_response(v, t, l);
      pairs.push_back({l, t.id, babel::render_prompt(v, t, l), ideal, babel::corrupt_response(v, ideal, l, rng), 1, 0});
    }
  const auto r = eval::reward_accuracy(pairs, v);
  for (const auto& [lang, row] : r.per_lang) {
    EXPECT_EQ(row.accuracy(), 1.0);
    EXPECT_EQ(row.incorrect, 0u);
  }
  EXPECT_EQ(r.mean_accuracy(), 1.0);
}

TEST(RewardAccuracy, RandomOrientationIsNearOneHalf) {
  const auto v = babel::make_vocab(2, 16);
  babel::WorldConfig wc;
  wc.num_langs = 2;
  const auto tasks = babel::gen_parallel_prompts(wc, 3000, 5);
  Rng rng(6);
  std::vector<PreferencePair> pairs;
  for (const auto& t : tasks) {
    const auto prompt = babel::render_prompt(v, t, 1);
    auto a = babel::ideal_response(v, t, 1);
    auto b = babel::corrupt_response(v, a, 1, rng);
    if (rng.bernoulli(0.5)) std::swap(a, b);
    pairs.push_back({1, t.id, prompt, a, b, 1, 0});
  }
  EXPECT_NEAR(eval::reward_accuracy(pairs, v).per_lang.at(1).accuracy(), 0.5, 0.05);
}

TEST(RewardAccuracy, TiesLeaveTheDenominator) {
  const auto v = babel::make_vocab(2, 4);
  const babel::TaskInstance t{0, {1, 2}};
  const auto p = babel::render_prompt(v, t, 0);
  const auto ideal = babel::ideal_response(v, t, 0);
  std::vector<PreferencePair> pairs{{0, 0, p, ideal, TokenSeq{babel::kEos}, 1, 0},
                                    {0, 0, p, TokenSeq{babel::kEos}, TokenSeq{}, 1, 0},
                                    {0, 0, p, TokenSeq{babel::kEos}, ideal, 1, 0}};
  const auto r = eval::reward_accuracy(pairs, v);
  EXPECT_EQ(r.per_lang.at(0).ties, 1u);
  EXPECT_EQ(r.per_lang.at(0).accuracy(), 0.5);
}

TEST(LengthStats, HandCases) {
  PreferenceDataset d = aggregate({{0, 1, {}, {1, 2, 3}, {1}, 1, 0}, {0, 2, {}, {1}, {1, 2}, 1, 0}, {2, 1, {}, {5}, {5, 5, 5, 5}, 1, 0}});
  const auto s = eval::length_stats(d);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s.at(0).mean_chosen, 2.0);
  EXPECT_DOUBLE_EQ(s.at(0).mean_rejected, 1.5);
  EXPECT_DOUBLE_EQ(s.at(2).mean_rejected, 4.0);
  EXPECT_FALSE(s.count(1));
  std::map<std::pair<int, std::int64_t>, TokenSeq> gens{{{1, 1}, {1, 2}}, {{1, 2}, {1}}};
  EXPECT_DOUBLE_EQ(eval::length_stats(gens).at(1).mean_generated, 1.5);
}

TEST(Decode, DeterministicPerSeed) {
  const auto v = babel::make_vocab(2, 4);
  const std::vector<babel::TaskInstance> tasks{{1, {0, 3}}, {2, {2, 1, 0}}};
  const auto m = random_model(tiny_config(lm::ModelMode::transformer, v.vocab_size(), 24), 7, 0.8);
  eval::DecodeConfig dc;
  dc.greedy = false;
  dc.seed = 3;
  EXPECT_EQ(eval::decode_all(m, v, tasks, dc), eval::decode_all(m, v, tasks, dc));
}
