#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "icr/babel/vocab.hpp"
#include "icr/error.hpp"
#include "icr/lm/decoder.hpp"
#include "icr/lm/model.hpp"
#include "icr/rng.hpp"
#include "icr/tokens.hpp"

namespace icr {

struct SamplingConfig {
  int n = 10;
  double temperature = 0.9;
  double top_p = 1.0;
  int max_new_tokens = 16;
  std::uint64_t seed = 0;
  bool greedy = false;  // the temperature -> 0+ limit

  void validate() const {
    require(n >= 2, ErrorKind::invalid_argument, "sampling needs n >= 2 candidates per prompt");
    require(greedy || temperature > 0.0, ErrorKind::invalid_argument, "temperature must be positive");
    require(top_p > 0.0 && top_p <= 1.0, ErrorKind::invalid_argument, "top_p must lie in (0, 1]");
    require(max_new_tokens >= 1, ErrorKind::invalid_argument, "max_new_tokens must be >= 1");
  }
};

// Truncated next-token distribution: tokens sorted by probability (ties by
// id ascending), kept until cumulative mass reaches top_p inclusive of the
// boundary token, renormalized. Returns (token, prob) pairs.
struct NucleusEntry {
  Token token;
  double prob;
};

inline std::vector<NucleusEntry> nucleus_distribution(std::span<const double> logits, double temperature,
                                                      double top_p) {
  const std::size_t V = logits.size();
  std::vector<double> lp(V);
  double mx = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) {
    lp[v] = logits[v] / temperature;
    mx = std::max(mx, lp[v]);
  }
  double z = 0.0;
  for (double x : lp) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<NucleusEntry> entries(V);
  for (std::size_t v = 0; v < V; ++v) entries[v] = {static_cast<Token>(v), std::exp(lp[v] - lse)};
  std::stable_sort(entries.begin(), entries.end(), [](const NucleusEntry& a, const NucleusEntry& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.token < b.token;
  });
  if (top_p < 1.0) {
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < entries.size()) {
      cum += entries[keep].prob;
      ++keep;
      if (cum >= top_p) break;
    }
    entries.resize(keep);
  }
  double mass = 0.0;
  for (const auto& e : entries) mass += e.prob;
  for (auto& e : entries) e.prob /= mass;
  return entries;
}

inline Token argmax_token(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < logits.size(); ++v)
    if (logits[v] > logits[best]) best = v;
  return static_cast<Token>(best);
}

inline Token sample_token(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng) {
  if (cfg.greedy) return argmax_token(logits);
  const auto dist = nucleus_distribution(logits, cfg.temperature, cfg.top_p);
  const double u = rng.uniform();
  double cum = 0.0;
  for (const auto& e : dist) {
    cum += e.prob;
    if (u < cum) return e.token;
  }
  return dist.back().token;
}

// One response: autoregressive until EOS (kept) or max_new_tokens.
inline TokenSeq generate(const lm::Model& model, TokenSpan prompt, const SamplingConfig& cfg, std::uint64_t stream_seed) {
  if (prompt.size() + static_cast<std::size_t>(cfg.max_new_tokens) > static_cast<std::size_t>(model.config.context_len))
    fail(ErrorKind::sequence_too_long, "prompt plus max_new_tokens exceeds context_len");
  lm::Decoder dec(model);
  Rng rng(stream_seed);
  TokenSeq out;
  auto logits = dec.start(prompt);
  for (int i = 0; i < cfg.max_new_tokens; ++i) {
    const Token t = sample_token(logits, cfg, rng);
    out.push_back(t);
    if (t == babel::kEos || i + 1 == cfg.max_new_tokens) break;
    logits = dec.step(t);
  }
  return out;
}

// N responses for one prompt. Sub-seeds depend only on (seed, prompt_index,
// sample index), so any evaluation order yields the same responses.
inline std::vector<TokenSeq> sample_responses(const lm::Model& model, TokenSpan prompt, const SamplingConfig& cfg,
                                              std::uint64_t prompt_index = 0) {
  cfg.validate();
  std::vector<TokenSeq> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  for (int s = 0; s < cfg.n; ++s)
    out.push_back(generate(model, prompt, cfg, derive_seed(cfg.seed, {prompt_index, static_cast<std::uint64_t>(s)})));
  return out;
}

}  // namespace icr
