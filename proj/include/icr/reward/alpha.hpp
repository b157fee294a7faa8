#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "icr/error.hpp"
#include "icr/reward/rewards.hpp"

namespace icr::reward {

struct Extremes {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
};

// Indices of the highest and lowest reward; ties go to the smaller
// sample_id. nullopt when every reward is equal.
inline std::optional<Extremes> select_extremes(std::span<const double> rewards, std::span<const int> sample_ids) {
  require(rewards.size() >= 2 && rewards.size() == sample_ids.size(), ErrorKind::invalid_argument,
          "pair selection needs at least two scored responses");
  Extremes e;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    const bool better = rewards[i] > rewards[e.chosen] ||
                        (rewards[i] == rewards[e.chosen] && sample_ids[i] < sample_ids[e.chosen]);
    const bool worse = rewards[i] < rewards[e.rejected] ||
                       (rewards[i] == rewards[e.rejected] && sample_ids[i] < sample_ids[e.rejected]);
    if (better) e.chosen = i;
    if (worse) e.rejected = i;
  }
  if (rewards[e.chosen] == rewards[e.rejected]) return std::nullopt;
  return e;
}

// {0} followed by `points` geometrically spaced values in [lo, hi].
inline std::vector<double> default_alpha_grid(int points = 40, double lo = 1e-4, double hi = 1.0) {
  std::vector<double> grid{0.0};
  for (int i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(lo * std::pow(hi / lo, f));
  }
  return grid;
}

// One prompt's pool reduced to what the alpha search needs.
struct LengthPool {
  std::vector<double> raw;
  std::vector<std::size_t> length;
  std::vector<int> sample_id;
};

// Mean |y+| - |y-| over prompts when pools are ranked by raw - alpha*|y|.
// Degenerate (all-equal) pools do not contribute.
inline double mean_length_gap(const std::vector<LengthPool>& pools, double alpha) {
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> r;
  for (const auto& p : pools) {
    r.resize(p.raw.size());
    for (std::size_t i = 0; i < p.raw.size(); ++i) r[i] = p.raw[i] - alpha * static_cast<double>(p.length[i]);
    const auto e = select_extremes(r, p.sample_id);
    if (!e) continue;
    sum += static_cast<double>(p.length[e->chosen]) - static_cast<double>(p.length[e->rejected]);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

// argmin over the grid of |mean length gap|; ties resolve toward the
// smaller alpha. The grid is visited in ascending order.
inline double optimize_alpha(const std::vector<LengthPool>& pools, std::vector<double> grid) {
  require(!pools.empty(), ErrorKind::empty_input, "optimize_alpha: no pools");
  for (const auto& p : pools)
    require(p.raw.size() >= 2, ErrorKind::empty_input, "optimize_alpha: every prompt needs two scored responses");
  require(!grid.empty(), ErrorKind::invalid_argument, "optimize_alpha: empty grid");
  std::sort(grid.begin(), grid.end());
  double best_alpha = grid.front();
  double best_gap = std::abs(mean_length_gap(pools, best_alpha));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double gap = std::abs(mean_length_gap(pools, grid[i]));
    if (gap < best_gap) {
      best_gap = gap;
      best_alpha = grid[i];
    }
  }
  return best_alpha;
}

// Groups scored responses by (lang, prompt) into LengthPools using raw scores.
inline std::map<int, std::vector<LengthPool>> length_pools_by_language(const std::vector<ScoredResponse>& scored) {
  std::map<std::pair<int, std::int64_t>, LengthPool> grouped;
  for (const auto& s : scored) {
    auto& p = grouped[{s.lang, s.prompt_id}];
    p.raw.push_back(s.raw_reward);
    p.length.push_back(s.token_count);
    p.sample_id.push_back(s.sample_id);
  }
  std::map<int, std::vector<LengthPool>> out;
  for (auto& [key, pool] : grouped) out[key.first].push_back(std::move(pool));
  return out;
}

// Per-language alpha-hat; languages without pools keep alpha 0.
inline std::vector<double> optimize_alpha_per_language(const std::vector<ScoredResponse>& scored, int num_langs,
                                                       const std::vector<double>& grid) {
  std::vector<double> alpha(static_cast<std::size_t>(num_langs), 0.0);
  for (const auto& [lang, pools] : length_pools_by_language(scored))
    if (lang >= 0 && lang < num_langs) alpha[static_cast<std::size_t>(lang)] = optimize_alpha(pools, grid);
  return alpha;
}

}  // namespace icr::reward
