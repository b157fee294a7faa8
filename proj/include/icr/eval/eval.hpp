#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icr/babel/oracle.hpp"
#include "icr/babel/vocab.hpp"
#include "icr/babel/world.hpp"
#include "icr/error.hpp"
#include "icr/lm/model.hpp"
#include "icr/pairs.hpp"
#include "icr/sampler.hpp"

namespace icr::eval {

struct WinRateRow {
  std::size_t wins = 0, losses = 0, ties = 0;
  std::size_t total() const { return wins + losses + ties; }
  double win_rate() const {
    return total() == 0 ? 0.0 : (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(total());
  }
};

struct WinRateReport {
  std::map<int, WinRateRow> per_lang;
  std::string baseline;
  std::string decode;

  double mean_win_rate(bool exclude_english) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& [lang, row] : per_lang) {
      if (exclude_english && lang == babel::kEnglish) continue;
      s += row.win_rate();
      ++n;
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  }
};

struct DecodeConfig {
  bool greedy = true;
  double temperature = 0.9;
  double top_p = 1.0;
  int max_new_tokens = 16;
  std::uint64_t seed = 0;

  SamplingConfig sampling() const {
    SamplingConfig s;
    s.n = 2;
    s.greedy = greedy;
    s.temperature = temperature;
    s.top_p = top_p;
    s.max_new_tokens = max_new_tokens;
    s.seed = seed;
    return s;
  }

  std::string describe() const {
    return greedy ? "greedy,max_new_tokens=" + std::to_string(max_new_tokens)
                  : "temperature=" + std::to_string(temperature) + ",top_p=" + std::to_string(top_p);
  }
};

// Generates one response per (task, language) from a model.
inline std::map<std::pair<int, std::int64_t>, TokenSeq> decode_all(const lm::Model& model,
                                                                   const babel::VocabLayout& vocab,
                                                                   const std::vector<babel::TaskInstance>& tasks,
                                                                   const DecodeConfig& dc) {
  std::map<std::pair<int, std::int64_t>, TokenSeq> out;
  const SamplingConfig sc = dc.sampling();
  for (int lang = 0; lang < vocab.num_langs(); ++lang)
    for (const auto& t : tasks) {
      const TokenSeq prompt = babel::render_prompt(vocab, t, lang);
      out[{lang, t.id}] = generate(model, prompt, sc,
                                   derive_seed(sc.seed, {static_cast<std::uint64_t>(lang), static_cast<std::uint64_t>(t.id)}));
    }
  return out;
}

inline void check_disjoint(const std::vector<babel::TaskInstance>& eval_tasks, const std::set<std::int64_t>& training_ids) {
  for (const auto& t : eval_tasks)
    if (training_ids.count(t.id))
      fail(ErrorKind::prompt_overlap, "evaluation prompt " + std::to_string(t.id) + " was used in training");
}

// Head-to-head per prompt and language; the oracle judge decides.
inline WinRateReport winrate(const lm::Model& candidate, const lm::Model& baseline, const babel::VocabLayout& vocab,
                             const std::vector<babel::TaskInstance>& tasks, const DecodeConfig& dc,
                             const std::set<std::int64_t>& training_ids = {}, double verbosity_weight = 0.5,
                             const std::string& baseline_name = "baseline") {
  check_disjoint(tasks, training_ids);
  const auto cand = decode_all(candidate, vocab, tasks, dc);
  const auto base = decode_all(baseline, vocab, tasks, dc);
  WinRateReport rep;
  rep.baseline = baseline_name;
  rep.decode = dc.describe();
  for (int lang = 0; lang < vocab.num_langs(); ++lang) {
    auto& row = rep.per_lang[lang];
    for (const auto& t : tasks) {
      const TokenSeq prompt = babel::render_prompt(vocab, t, lang);
      switch (babel::oracle_judge(vocab, prompt, cand.at({lang, t.id}), base.at({lang, t.id}), verbosity_weight)) {
        case babel::Verdict::a: ++row.wins; break;
        case babel::Verdict::b: ++row.losses; break;
        case babel::Verdict::tie: ++row.ties; break;
      }
    }
  }
  return rep;
}

struct AccuracyRow {
  std::size_t correct = 0, incorrect = 0, ties = 0;
  double accuracy() const {
    const std::size_t n = correct + incorrect;
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  }
};

struct RewardAccuracyReport {
  std::map<int, AccuracyRow> per_lang;

  double mean_accuracy() const {
    double s = 0.0;
    for (const auto& [lang, row] : per_lang) s += row.accuracy();
    return per_lang.empty() ? 0.0 : s / static_cast<double>(per_lang.size());
  }
};

// A pair is correct when the oracle prefers the chosen side; oracle ties are
// excluded from the denominator and reported separately.
inline RewardAccuracyReport reward_accuracy(const std::vector<PreferencePair>& pairs, const babel::VocabLayout& vocab,
                                            double verbosity_weight = 0.5) {
  RewardAccuracyReport rep;
  for (const auto& p : pairs) {
    auto& row = rep.per_lang[p.lang];
    switch (babel::oracle_judge(vocab, p.prompt, p.chosen, p.rejected, verbosity_weight)) {
      case babel::Verdict::a: ++row.correct; break;
      case babel::Verdict::b: ++row.incorrect; break;
      case babel::Verdict::tie: ++row.ties; break;
    }
  }
  return rep;
}

struct LengthRow {
  double mean_chosen = 0.0, mean_rejected = 0.0, mean_generated = 0.0;
  std::size_t count = 0;
};

// Languages with no data are absent from the map.
using LengthStats = std::map<int, LengthRow>;

inline LengthStats length_stats(const PreferenceDataset& d) {
  LengthStats out;
  for (const auto& p : d.pairs) {
    auto& r = out[p.lang];
    r.mean_chosen += static_cast<double>(p.chosen.size());
    r.mean_rejected += static_cast<double>(p.rejected.size());
    ++r.count;
  }
  for (auto& [lang, r] : out) {
    r.mean_chosen /= static_cast<double>(r.count);
    r.mean_rejected /= static_cast<double>(r.count);
  }
  return out;
}

inline LengthStats length_stats(const std::map<std::pair<int, std::int64_t>, TokenSeq>& generations) {
  LengthStats out;
  for (const auto& [key, y] : generations) {
    auto& r = out[key.first];
    r.mean_generated += static_cast<double>(y.size());
    ++r.count;
  }
  for (auto& [lang, r] : out) r.mean_generated /= static_cast<double>(r.count);
  return out;
}

// Mean oracle score of greedy generations per language; a diagnostic.
inline std::map<int, double> mean_oracle_score(const lm::Model& model, const babel::VocabLayout& vocab,
                                               const std::vector<babel::TaskInstance>& tasks, const DecodeConfig& dc,
                                               double verbosity_weight = 0.5) {
  std::map<int, double> out;
  for (const auto& [key, y] : decode_all(model, vocab, tasks, dc)) {
    const auto& task = *std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.id == key.second; });
    out[key.first] += babel::oracle_score(vocab, babel::render_prompt(vocab, task, key.first), y, verbosity_weight).value;
  }
  for (auto& [lang, v] : out) v /= static_cast<double>(tasks.size());
  return out;
}

}  // namespace icr::eval
