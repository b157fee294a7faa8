#include <chrono>
#include <cmath>

#include "test_util.hpp"

using namespace icr;
using namespace icr::testing;

namespace {

// Pools where the raw reward grows with length on top of a quality signal.
std::vector<reward::LengthPool> exploiting_pools(Rng& rng, int n, double slope) {
  std::vector<reward::LengthPool> pools;
  for (int p = 0; p < n; ++p) {
    reward::LengthPool pool;
    const int k = rng.range(2, 10);
    for (int i = 0; i < k; ++i) {
      const std::size_t len = static_cast<std::size_t>(rng.range(2, 16));
      pool.length.push_back(len);
      pool.raw.push_back(slope * static_cast<double>(len) + rng.normal(0.0, 0.3));
      pool.sample_id.push_back(i);
    }
    pools.push_back(pool);
  }
  return pools;
}

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

double brute_argmin(const std::vector<reward::LengthPool>& pools, std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  double best = grid[0], best_gap = std::abs(brute_gap(pools, grid[0]));
  for (double a : grid) {
    const double g = std::abs(brute_gap(pools, a));
    if (g < best_gap) {
      best = a;
      best_gap = g;
    }
  }
  return best;
}

}  // namespace

TEST(Alpha, DefaultGrid) {
  const auto g = reward::default_alpha_grid();
  ASSERT_EQ(g.size(), 41u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 1e-4);
  EXPECT_DOUBLE_EQ(g[40], 1.0);
  for (std::size_t i = 2; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(1e4, 1.0 / 39.0), 1e-12);
}

TEST(Alpha, MatchesExhaustiveArgminAndShrinksGap) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  const auto grid = reward::default_alpha_grid();
  for (int fam = 0; fam < 40; ++fam) {
    const double slope = 0.02 * fam;
    const auto pools = exploiting_pools(rng, 60, slope);
    const double got = reward::optimize_alpha(pools, grid);
    EXPECT_EQ(got, brute_argmin(pools, grid)) << "slope " << slope;
    EXPECT_LE(std::abs(reward::mean_length_gap(pools, got)), std::abs(reward::mean_length_gap(pools, 0.0)));
    EXPECT_DOUBLE_EQ(reward::mean_length_gap(pools, got), brute_gap(pools, got));
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 30.0);
}

TEST(Alpha, TieGoesToSmallestAlpha) {
  // Lengths are equal within every pool, so every alpha gives gap 0.
  std::vector<reward::LengthPool> pools{{{1.0, 2.0}, {3, 3}, {0, 1}}};
  EXPECT_EQ(reward::optimize_alpha(pools, {0.5, 0.1, 0.0}), 0.0);
  EXPECT_EQ(reward::optimize_alpha(pools, {0.5, 0.1}), 0.1);
}

TEST(Alpha, HandPool) {
  // long (len 10, raw 2.0) beats short (len 2, raw 1.0) until alpha > 1/8
  std::vector<reward::LengthPool> pools{{{2.0, 1.0}, {10, 2}, {0, 1}}};
  EXPECT_DOUBLE_EQ(reward::mean_length_gap(pools, 0.1), 8.0);
  EXPECT_DOUBLE_EQ(reward::mean_length_gap(pools, 0.2), -8.0);
  // exactly at 1/8 the rewards tie and the pool is skipped
  EXPECT_DOUBLE_EQ(reward::mean_length_gap(pools, 0.125), 0.0);
  EXPECT_EQ(reward::optimize_alpha(pools, {0.0, 0.1, 0.125, 0.2}), 0.125);
}

TEST(Alpha, PerLanguageUsesRawScores) {
  std::vector<reward::ScoredResponse> s{
      {0, 1, 0, {}, 0.0, 2.0, 10}, {0, 1, 1, {}, 0.0, 1.0, 2},  // language 0 exploits length
      {1, 1, 0, {}, 0.0, 2.0, 2},  {1, 1, 1, {}, 0.0, 1.0, 10},  // language 1 prefers short
  };
  const auto a = reward::optimize_alpha_per_language(s, 3, {0.0, 0.125, 0.2});
  EXPECT_EQ(a, (std::vector<double>{0.125, 0.0, 0.0}));
}

TEST(Alpha, Errors) {
  EXPECT_EQ(error_kind_of([] { reward::optimize_alpha({}, {0.0}); }), ErrorKind::empty_input);
  std::vector<reward::LengthPool> one{{{1.0}, {2}, {0}}};
  EXPECT_EQ(error_kind_of([&] { reward::optimize_alpha(one, {0.0}); }), ErrorKind::empty_input);
  std::vector<reward::LengthPool> ok{{{1.0, 2.0}, {2, 3}, {0, 1}}};
  EXPECT_EQ(error_kind_of([&] { reward::optimize_alpha(ok, {}); }), ErrorKind::invalid_argument);
}
