#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "icr/error.hpp"
#include "icr/lm/model.hpp"
#include "icr/lm/optim.hpp"
#include "icr/pairs.hpp"
#include "icr/rng.hpp"
#include "icr/train/losses.hpp"

namespace icr::train {

enum class LossKind { dpo, dpo_nll, kto };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::dpo: return "dpo";
    case LossKind::dpo_nll: return "dpo_nll";
    case LossKind::kto: return "kto";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "dpo") return LossKind::dpo;
  if (s == "dpo_nll") return LossKind::dpo_nll;
  if (s == "kto") return LossKind::kto;
  fail(ErrorKind::invalid_argument, "unknown loss '" + s + "'");
}

struct TrainConfig {
  LossKind loss = LossKind::dpo_nll;
  double beta = 0.1;
  double peak_lr = 1e-3;
  int batch_size = 16;
  int epochs = 1;
  double warmup_fraction = 0.03;
  double weight_decay = 0.0;
  double lambda_w = 1.0;
  double lambda_l = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(beta > 0.0, ErrorKind::invalid_argument, "beta must be positive");
    require(batch_size >= 1 && epochs >= 1, ErrorKind::invalid_argument, "batch_size and epochs must be >= 1");
    require(peak_lr > 0.0, ErrorKind::invalid_argument, "peak_lr must be positive");
    require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, ErrorKind::invalid_argument,
            "warmup_fraction must lie in [0, 1)");
  }
};

struct StepMetric {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> components;
};

using StepLog = std::vector<StepMetric>;

// Shuffled mini-batch order over `n` items for every epoch.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, int epochs,
                                                          std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> idx(n);
  for (int e = 0; e < epochs; ++e) {
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, {0xBA7C, static_cast<std::uint64_t>(e)}));
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size))
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  }
  return batches;
}

// One preference-training pass: pi_ref is frozen (its log-probs cached),
// the policy starts from `start` and is updated by AdamW under warmup+cosine.
inline lm::Model train_iteration(const PreferenceDataset& data, const lm::Model& start, const lm::Model& reference,
                                 const TrainConfig& cfg, StepLog* log = nullptr) {
  cfg.validate();
  if (data.empty()) fail(ErrorKind::empty_input, "train_iteration: empty preference dataset");
  lm::check_same_vocab(start, reference);
  lm::Model policy = start;
  const auto batches = make_batches(data.size(), cfg.batch_size, cfg.epochs, cfg.seed);
  lm::OptimizerState opt(policy.size(), {cfg.peak_lr, cfg.warmup_fraction, batches.size()}, cfg.weight_decay);

  std::vector<PairExample> pairs;
  std::vector<KtoExample> kto;
  if (cfg.loss == LossKind::kto)
    kto = make_kto_examples(reference, data.pairs);
  else
    pairs = make_pair_examples(reference, data.pairs);

  for (const auto& batch : batches) {
    const double lr = lm::lr_at(opt.step, opt.schedule);
    LossResult res;
    if (cfg.loss == LossKind::kto) {
      std::vector<KtoExample> b;
      for (std::size_t i : batch) {
        b.push_back(kto[2 * i]);
        b.push_back(kto[2 * i + 1]);
      }
      const double z = estimate_zref(policy, reference, b, cfg.beta);
      res = kto_loss(policy, b, cfg.beta, cfg.lambda_w, cfg.lambda_l, z);
    } else {
      std::vector<PairExample> b;
      for (std::size_t i : batch) b.push_back(pairs[i]);
      res = dpo_family_loss(policy, b, cfg.beta, cfg.loss == LossKind::dpo_nll);
    }
    if (log) log->push_back({opt.step, lr, res.value, res.components});
    lm::adamw_step(policy.params, res.grad, opt);
  }
  policy.check_finite();
  return policy;
}

struct SftConfig {
  double peak_lr = 3e-3;
  int batch_size = 32;
  int epochs = 1;
  double warmup_fraction = 0.03;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

inline lm::Model train_sft(const std::vector<SftExample>& corpus, const lm::Model& start, const SftConfig& cfg,
                           StepLog* log = nullptr) {
  if (corpus.empty()) fail(ErrorKind::empty_input, "train_sft: empty corpus");
  lm::Model model = start;
  const auto batches = make_batches(corpus.size(), cfg.batch_size, cfg.epochs, cfg.seed);
  lm::OptimizerState opt(model.size(), {cfg.peak_lr, cfg.warmup_fraction, batches.size()}, cfg.weight_decay);
  std::vector<SftExample> b;
  for (const auto& batch : batches) {
    b.clear();
    for (std::size_t i : batch) b.push_back(corpus[i]);
    const double lr = lm::lr_at(opt.step, opt.schedule);
    auto res = sft_loss(model, b);
    if (log) log->push_back({opt.step, lr, res.value, res.components});
    lm::adamw_step(model.params, res.grad, opt);
  }
  model.check_finite();
  return model;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t nonzero = 0;  // probes where either gradient estimate is nonzero
};

// Relative error |a - b| / max(|a|, |b|, floor). The floor keeps parameters
// with vanishing gradients from reporting pure round-off as error.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Compares the analytic gradient of `loss` with central differences at
// `probes` uniformly drawn parameter indices.
inline GradCheckResult finite_difference_check(const lm::Model& model,
                                               const std::function<LossResult(const lm::Model&, bool)>& loss,
                                               std::size_t probes = 200, double eps = 1e-5, std::uint64_t seed = 0) {
  const LossResult base = loss(model, true);
  require(base.grad.size() == model.size(), ErrorKind::shape_mismatch, "loss returned no gradient");
  lm::Model probe = model;
  Rng rng(derive_seed(seed, {0x6C4E}));
  GradCheckResult out;
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = rng.below(model.size());
    const double orig = probe.params[i];
    probe.params[i] = orig + eps;
    const double up = loss(probe, false).value;
    probe.params[i] = orig - eps;
    const double down = loss(probe, false).value;
    probe.params[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    if (numeric != 0.0 || base.grad[i] != 0.0) ++out.nonzero;
    out.max_rel_error = std::max(out.max_rel_error, relative_error(base.grad[i], numeric));
    ++out.probes;
  }
  return out;
}

}  // namespace icr::train
