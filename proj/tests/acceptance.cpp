// Acceptance run: one PASS/FAIL line per criterion, then a summary.
// Criteria 6-8 are stochastic analogs; their outcome is reported but only
// the deterministic criteria decide the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "icr/icr.hpp"
#include "oracle.hpp"

using namespace icr;
using namespace icr::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
}

// ---------------------------------------------------------------- 1

void criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (const auto& row : pipeline::run_gradcheck(1)) {
    if (row.result.max_rel_error >= worst) {
      worst = row.result.max_rel_error;
      where = row.mode + "/" + row.loss;
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 60.0,
         "max rel error " + fmt(worst) + " (" + where + "), 200 probes x 6 losses/modes in " + fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------- 2

std::vector<PreferencePair> random_pairs(Rng& rng, int vocab, int n) {
  std::vector<PreferencePair> out;
  for (int i = 0; i < n; ++i) {
    PreferencePair p;
    p.prompt_id = i;
    p.prompt = random_tokens(rng, vocab, rng.range(2, 5));
    p.chosen = random_tokens(rng, vocab, rng.range(1, 6));
    p.rejected = random_tokens(rng, vocab, rng.range(1, 6));
    out.push_back(p);
  }
  return out;
}

void criterion2() {
  Rng rng(2);
  double dpo_err = 0.0, kto_err = 0.0, prob_err = 0.0;
  bool reward_zero = true;
  for (auto mode : {lm::ModelMode::transformer, lm::ModelMode::bigram}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto m = random_model(tiny_config(mode, 12), 10 + s, 0.5);
      const auto pairs = random_pairs(rng, 12, 8);
      for (double beta : {0.05, 0.1, 1.0}) {
        dpo_err = std::max(dpo_err, std::abs(train::dpo_loss(m, train::make_pair_examples(m, pairs), beta).value -
                                             std::log(2.0)));
        const auto kto = train::make_kto_examples(m, pairs);
        const double z = train::estimate_zref(m, m, kto, beta);
        kto_err = std::max(kto_err, std::abs(train::kto_loss(m, kto, beta, 1.0, 1.0, z).value - 0.5));
        for (const auto& p : pairs) {
          reward_zero = reward_zero && reward::implicit_reward(m, m, p.prompt, p.chosen, beta) == 0.0;
          prob_err =
              std::max(prob_err, std::abs(train::preference_prob(m, m, p.prompt, p.chosen, p.rejected, beta) - 0.5));
        }
      }
    }
  }
  report(2, dpo_err <= 1e-12 && kto_err <= 1e-12 && prob_err <= 1e-12 && reward_zero,
         "|dpo-ln2| " + fmt(dpo_err) + ", |kto-0.5| " + fmt(kto_err) + ", |p-0.5| " + fmt(prob_err) +
             ", implicit reward " + (reward_zero ? "exactly 0" : "NONZERO"));
}

// ---------------------------------------------------------------- 3

TokenSeq hand_prompt(const babel::VocabLayout& v, const babel::TaskInstance& t, int prompt_lang, int content_lang) {
  TokenSeq p{babel::kBos, babel::kNumSpecials + prompt_lang};
  for (int c : t.content) p.push_back(v.content_base() + content_lang * v.alphabet() + c);
  p.push_back(babel::kSep);
  return p;
}

void criterion3() {
  const auto v = babel::make_vocab(3, 5);
  const auto policy = random_model(tiny_config(lm::ModelMode::transformer, v.vocab_size()), 31, 0.4);
  const auto ref = random_model(tiny_config(lm::ModelMode::transformer, v.vocab_size()), 32, 0.4);
  auto implicit = [&](const TokenSeq& x, const TokenSeq& y, double beta) {
    return beta * (reference_logprob(policy, x, y) - reference_logprob(ref, x, y));
  };
  Rng rng(3);
  double worst[3] = {0, 0, 0};
  for (int i = 0; i < 50; ++i) {
    babel::TaskInstance task;
    task.id = i;
    std::vector<int> letters{0, 1, 2, 3, 4};
    rng.shuffle(letters.begin(), letters.end());
    task.content.assign(letters.begin(), letters.begin() + rng.range(2, 4));
    const int lang = rng.range(0, 2);
    TokenSeq y;
    for (int k = rng.range(1, 6); k > 0; --k) y.push_back(v.encode(lang, rng.range(0, 4)));
    if (rng.bernoulli(0.7)) y.push_back(babel::kEos);
    reward::RewardConfig cfg;
    cfg.beta = 0.05 + rng.uniform();
    cfg.alpha = {0.1 * rng.uniform(), 0.1 * rng.uniform(), 0.1 * rng.uniform()};
    const double penalty = cfg.alpha[static_cast<std::size_t>(lang)] * static_cast<double>(y.size());

    const TokenSeq x_en = hand_prompt(v, task, 0, 0);
    TokenSeq x_mapped = x_en;
    if (lang != 0) x_mapped.insert(x_mapped.begin(), babel::kNumSpecials + lang);
    TokenSeq y_en;
    for (Token t : y) y_en.push_back(t == babel::kEos ? t : t - lang * v.alphabet());

    const auto x = reward::prompt_pair(v, task, lang);
    worst[0] = std::max(worst[0], std::abs(reward::reward_rc(policy, ref, v, x, y, cfg) -
                                           (implicit(x_mapped, y, cfg.beta) - penalty)));
    worst[1] = std::max(worst[1], std::abs(reward::reward_rm(policy, ref, x, y, cfg) -
                                           (implicit(hand_prompt(v, task, lang, lang), y, cfg.beta) - penalty)));
    worst[2] = std::max(worst[2], std::abs(reward::reward_rt(policy, ref, v, x, y, cfg, 9) -
                                           (implicit(x_en, y_en, cfg.beta) - penalty)));
  }
  report(3, worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-12,
         "50 cases, max |diff| rc " + fmt(worst[0]) + " rm " + fmt(worst[1]) + " rt " + fmt(worst[2]));
}

// ---------------------------------------------------------------- 4

std::optional<std::pair<int, int>> selected_ids(const std::vector<reward::ScoredResponse>& pool) {
  const auto p = build_pair(TokenSeq{0}, pool);
  if (!p) return std::nullopt;
  int c = -1, r = -1;
  for (const auto& s : pool) {
    if (c < 0 && s.tokens == p->chosen) c = s.sample_id;
    if (r < 0 && s.tokens == p->rejected) r = s.sample_id;
  }
  return std::pair{c, r};
}

void criterion4() {
  Rng rng(4);
  int violations = 0, flat = 0, flat_skipped = 0, ordered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.range(2, 10);
    const bool all_equal = rng.bernoulli(0.1);
    std::vector<reward::ScoredResponse> pool;
    for (int i = 0; i < n; ++i) {
      reward::ScoredResponse s;
      s.prompt_id = trial;
      s.sample_id = i;
      s.tokens = TokenSeq(static_cast<std::size_t>(1 + i), static_cast<Token>(8 + i));  // distinct per sample
      s.token_count = s.tokens.size();
      s.reward = all_equal ? 0.5 : 0.25 * rng.range(-8, 8);
      s.raw_reward = s.reward;
      pool.push_back(s);
    }
    const auto base = selected_ids(pool);
    bool equal = std::all_of(pool.begin(), pool.end(), [&](const auto& s) { return s.reward == pool[0].reward; });
    if (equal) {
      ++flat;
      flat_skipped += base ? 0 : 1;
      continue;
    }
    if (!base) {
      ++violations;
      continue;
    }
    const auto p = *build_pair(TokenSeq{0}, pool);
    if (p.chosen_reward >= p.rejected_reward) ++ordered;
    auto shifted = pool, warped = pool;
    const double c = 0.25 * rng.range(-40, 40);
    for (auto& s : shifted) s.reward += c;
    for (auto& s : warped) s.reward = std::exp(s.reward) * 3.0 + s.reward * s.reward * s.reward;
    if (selected_ids(shifted) != base || selected_ids(warped) != base) ++violations;
  }
  const int live = 1000 - flat;
  report(4, violations == 0 && ordered == live && flat_skipped == flat && flat > 0,
         "1000 pools: " + std::to_string(violations) + " invariance violations, chosen>=rejected in " +
             std::to_string(ordered) + "/" + std::to_string(live) + ", all-equal skipped " +
             std::to_string(flat_skipped) + "/" + std::to_string(flat));
}

// ---------------------------------------------------------------- 5

double brute_gap(const std::vector<reward::LengthPool>& pools, double alpha) {
  double sum = 0.0;
  int count = 0;
  for (const auto& p : pools) {
    std::size_t hi = 0, lo = 0;
    std::vector<double> r;
    for (std::size_t i = 0; i < p.raw.size(); ++i) r.push_back(p.raw[i] - alpha * static_cast<double>(p.length[i]));
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i] > r[hi] || (r[i] == r[hi] && p.sample_id[i] < p.sample_id[hi])) hi = i;
      if (r[i] < r[lo] || (r[i] == r[lo] && p.sample_id[i] < p.sample_id[lo])) lo = i;
    }
    if (r[hi] == r[lo]) continue;
    sum += static_cast<double>(p.length[hi]) - static_cast<double>(p.length[lo]);
    ++count;
  }
  return count ? sum / count : 0.0;
}

void criterion5() {
  const auto t0 = Clock::now();
  Rng rng(5);
  auto grid = reward::default_alpha_grid();
  int mismatches = 0, worse = 0;
  for (int fam = 0; fam < 40; ++fam) {
    const double slope = 0.02 * fam;
    std::vector<reward::LengthPool> pools;
    for (int q = 0; q < 60; ++q) {
      reward::LengthPool pool;
      for (int i = rng.range(2, 10); i > 0; --i) {
        const std::size_t len = static_cast<std::size_t>(rng.range(2, 16));
        pool.length.push_back(len);
        pool.raw.push_back(slope * static_cast<double>(len) + rng.normal(0.0, 0.3));
        pool.sample_id.push_back(static_cast<int>(pool.raw.size()) - 1);
      }
      pools.push_back(pool);
    }
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    double want = sorted[0], best = std::abs(brute_gap(pools, sorted[0]));
    for (double a : sorted) {
      const double g = std::abs(brute_gap(pools, a));
      if (g < best) {
        best = g;
        want = a;
      }
    }
    const double got = reward::optimize_alpha(pools, grid);
    if (got != want) ++mismatches;
    if (std::abs(brute_gap(pools, got)) > std::abs(brute_gap(pools, 0.0))) ++worse;
  }
  const double secs = seconds_since(t0);
  report(5, mismatches == 0 && worse == 0 && secs < 30.0,
         "40 families: " + std::to_string(mismatches) + " argmin mismatches, " + std::to_string(worse) +
             " with a larger gap than alpha=0, " + fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------- 6-8

struct SeedOutcome {
  bool c6 = false, c7 = false, c8 = false;
};

std::string lang_rates(const eval::WinRateReport& r) {
  std::string s;
  for (const auto& [lang, row] : r.per_lang) s += (s.empty() ? "" : " ") + fmt(row.win_rate(), 3);
  return s;
}

SeedOutcome run_seed(std::uint64_t seed) {
  SeedOutcome out;
  pipeline::RunConfig cfg;
  cfg.seed = seed;
  std::cout << "-- seed " << seed << std::endl;

  auto t0 = Clock::now();
  const auto world = pipeline::build_world(cfg);
  const auto initial = pipeline::train_initial(cfg, world.corpus);
  const double sft_secs = seconds_since(t0);
  auto t1 = Clock::now();
  const auto aligned = pipeline::align_english(cfg, world.vocab, world.align_prompts, initial);
  const lm::Model& pi0 = aligned.policy;
  const double align_secs = seconds_since(t1);

  // 6: reward accuracy
  t1 = Clock::now();
  const auto accs = pipeline::reward_acc(cfg, initial, pi0);
  std::map<reward::Variant, double> avg;
  bool per_lang_ok = true;
  std::string rc_langs;
  for (const auto& va : accs) {
    avg[va.variant] = va.report.mean_accuracy();
    std::cout << "   " << reward::to_string(va.variant) << " accuracy:";
    for (const auto& [lang, row] : va.report.per_lang) {
      std::cout << " " << babel::lang_name(lang) << "=" << fmt(row.accuracy(), 3);
      if (va.variant == reward::Variant::rc && lang != babel::kEnglish && row.accuracy() < 0.60) per_lang_ok = false;
    }
    std::cout << " avg=" << fmt(va.report.mean_accuracy(), 3) << std::endl;
  }
  const bool ordered = avg[reward::Variant::rc] >= avg[reward::Variant::rm] &&
                       avg[reward::Variant::rm] >= avg[reward::Variant::rt];
  const double c6_secs = sft_secs + align_secs + seconds_since(t1);
  out.c6 = per_lang_ok && ordered && c6_secs < 600.0;
  std::cout << "   c6 seed " << seed << ": rc per-language >= 0.60 " << (per_lang_ok ? "yes" : "no")
            << ", rc>=rm>=rt " << (ordered ? "yes" : "no") << ", " << fmt(c6_secs, 3) << " s -> "
            << (out.c6 ? "hold" : "miss") << std::endl;

  // 7 and 8: two iterations per loss, judged against pi^0
  for (auto loss : {train::LossKind::dpo_nll, train::LossKind::kto}) {
    pipeline::RunConfig c = cfg;
    c.train.loss = loss;
    c.iterations = 2;
    c.reward.variant = reward::Variant::rc;
    c.reward.reference = reward::ReferencePolicy::initial;
    std::vector<eval::WinRateReport> rounds;
    t1 = Clock::now();
    pipeline::iterate(c, initial, pi0, [&](const train::RoundOutput& o) {
      rounds.push_back(pipeline::evaluate(c, world, *o.policy, pi0, "pi_0", o.round).report);
      std::cout << "   " << train::to_string(loss) << " t" << o.round << ": pairs " << o.dataset->size()
                << ", win rate vs pi_0 per language " << lang_rates(rounds.back()) << ", non-English mean "
                << fmt(rounds.back().mean_win_rate(true), 4) << std::endl;
    });
    const double secs = seconds_since(t1) + sft_secs + align_secs;
    const double w1 = rounds.at(0).mean_win_rate(true), w2 = rounds.at(1).mean_win_rate(true);
    const double en1 = rounds[0].per_lang.at(babel::kEnglish).win_rate();
    const double en2 = rounds[1].per_lang.at(babel::kEnglish).win_rate();
    if (loss == train::LossKind::dpo_nll) {
      out.c7 = w1 - 0.5 >= 0.05 && w2 >= w1 && en1 >= 0.5 && en2 >= 0.5 && secs < 900.0;
      std::cout << "   c7 seed " << seed << ": gain t1 " << fmt(100 * (w1 - 0.5), 3) << " pts, t2>=t1 "
                << (w2 >= w1 ? "yes" : "no") << ", English " << fmt(en1, 3) << "/" << fmt(en2, 3) << ", "
                << fmt(secs, 3) << " s -> " << (out.c7 ? "hold" : "miss") << std::endl;
    } else {
      out.c8 = w2 - 0.5 >= 0.03 && secs < 900.0;
      std::cout << "   c8 seed " << seed << ": gain t2 " << fmt(100 * (w2 - 0.5), 3) << " pts, " << fmt(secs, 3)
                << " s -> " << (out.c8 ? "hold" : "miss") << std::endl;
    }
  }
  return out;
}

void criteria6to8() {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  int h6 = 0, h7 = 0, h8 = 0;
  for (auto s : seeds) {
    const auto o = run_seed(s);
    h6 += o.c6;
    h7 += o.c7;
    h8 += o.c8;
  }
  auto line = [&](int hold) { return std::to_string(hold) + "/3 seeds hold (need 2)"; };
  report(6, h6 >= 2, "reward accuracy: " + line(h6));
  report(7, h7 >= 2, "dpo_nll transfer: " + line(h7));
  report(8, h8 >= 2, "kto transfer: " + line(h8));
}

// ---------------------------------------------------------------- 9

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

bool snapshot_file_equal(const fs::path& a, const fs::path& b) {
  std::ifstream ia(a, std::ios::binary), ib(b, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(ia), {}) == std::string(std::istreambuf_iterator<char>(ib), {});
}

void criterion9() {
  const auto t0 = Clock::now();
  const fs::path base = fs::temp_directory_path() / ("icr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  pipeline::RunConfig cfg;
  std::ostringstream sink;
  for (const char* name : {"a", "b"}) {
    pipeline::RunDir rd(base / name, cfg, false, sink);
    for (const auto& stage : pipeline::stage_names()) rd.run(stage);
  }
  const auto a = snapshot(base / "a"), b = snapshot(base / "b");
  int datasets = 0, checkpoints = 0, differing = 0;
  bool roundtrip = true;
  for (const auto& [rel, bytes] : a) {
    auto it = b.find(rel);
    if (it == b.end() || it->second != bytes) ++differing;
    const fs::path p = base / "a" / rel;
    const fs::path again = base / "roundtrip.tmp";
    if (p.extension() == ".jsonl" && rel.rfind("data/", 0) == 0) {
      ++datasets;
      const auto d = load_dataset(p);
      save_dataset(d, again);
      roundtrip = roundtrip && load_dataset(again) == d && snapshot_file_equal(p, again);
    }
    if (p.extension() == ".ckpt") {
      ++checkpoints;
      const auto m = lm::load_checkpoint(p);
      lm::save_checkpoint(m, again);
      roundtrip = roundtrip && lm::load_checkpoint(again).params == m.params && snapshot_file_equal(p, again);
    }
  }
  if (b.size() != a.size()) ++differing;
  fs::remove_all(base);
  report(9, differing == 0 && roundtrip && datasets > 0 && checkpoints > 0,
         std::to_string(a.size()) + " files across two full runs, " + std::to_string(differing) + " differing; " +
             std::to_string(datasets) + " datasets and " + std::to_string(checkpoints) + " checkpoints round-trip " +
             (roundtrip ? "losslessly" : "WITH LOSS") + ", " + fmt(seconds_since(t0), 4) + " s");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::pair<int, std::function<void()>>> deterministic{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5}};
  auto guarded = [](const std::vector<int>& ids, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      for (int id : ids) report(id, false, std::string("threw: ") + e.what());
    }
  };
  for (const auto& [id, f] : deterministic) guarded({id}, f);
  guarded({6, 7, 8}, criteria6to8);
  guarded({9}, criterion9);

  std::sort(verdicts.begin(), verdicts.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  int passed = 0;
  bool hard_fail = false;
  std::cout << "\n== acceptance summary" << std::endl;
  for (const auto& v : verdicts) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << v.id << ": " << v.detail << std::endl;
    passed += v.pass;
    if (!v.pass && (v.id < 6 || v.id > 8)) hard_fail = true;
  }
  std::cout << passed << "/" << verdicts.size() << " criteria pass in " << fmt(seconds_since(t0), 4) << " s";
  std::cout << "; criteria 6-8 are reported without affecting the exit status" << std::endl;
  return hard_fail ? 1 : 0;
}
