#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "icr/error.hpp"
#include "icr/lm/forward.hpp"
#include "icr/lm/model.hpp"
#include "icr/pairs.hpp"
#include "icr/tokens.hpp"

namespace icr::train {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // empty when gradients were not requested
  std::map<std::string, double> components;
};

// Bradley-Terry preference probability with implicit rewards:
// sigmoid(beta * [logratio(y_w) - logratio(y_l)]).
inline double preference_prob(const lm::Model& policy, const lm::Model& reference, TokenSpan x, TokenSpan y_w,
                              TokenSpan y_l, double beta) {
  lm::check_same_vocab(policy, reference);
  const double lr_w = lm::sequence_logprob(policy, x, y_w) - lm::sequence_logprob(reference, x, y_w);
  const double lr_l = lm::sequence_logprob(policy, x, y_l) - lm::sequence_logprob(reference, x, y_l);
  return sigmoid(beta * (lr_w - lr_l));
}

// A pair with its reference log-probabilities computed once up front; the
// reference stays frozen for a whole training iteration.
struct PairExample {
  TokenSeq prompt, chosen, rejected;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

inline std::vector<PairExample> make_pair_examples(const lm::Model& reference, std::span<const PreferencePair> pairs) {
  std::vector<PairExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.push_back({p.prompt, p.chosen, p.rejected, lm::sequence_logprob(reference, p.prompt, p.chosen),
                   lm::sequence_logprob(reference, p.prompt, p.rejected)});
  return out;
}

// Batch mean of -log sigmoid(beta * margin), optionally plus the
// length-normalized NLL of the chosen response, -log pi(y+|x) / |y+|.
inline LossResult dpo_family_loss(const lm::Model& policy, std::span<const PairExample> batch, double beta,
                                  bool with_nll, bool need_grad = true) {
  require(!batch.empty(), ErrorKind::empty_input, "dpo loss on an empty batch");
  require(beta > 0.0, ErrorKind::invalid_argument, "beta must be positive");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  lm::LossGraph graph;
  LossResult res;
  double pref_sum = 0.0, nll_sum = 0.0;
  for (const auto& ex : batch) {
    const std::size_t iw = graph.add(lm::forward_record(policy, ex.prompt, ex.chosen));
    const std::size_t il = graph.add(lm::forward_record(policy, ex.prompt, ex.rejected));
    const double margin = beta * ((graph.total(iw) - ex.ref_chosen) - (graph.total(il) - ex.ref_rejected));
    pref_sum += neg_log_sigmoid(margin);
    // d/dmargin of -log sigmoid(margin) = -sigmoid(-margin)
    const double dm = -sigmoid(-margin) * inv_b;
    graph.add_coefficient(iw, dm * beta);
    graph.add_coefficient(il, -dm * beta);
    if (with_nll) {
      require(!ex.chosen.empty(), ErrorKind::invalid_argument, "NLL term needs a nonempty chosen response");
      const double len = static_cast<double>(ex.chosen.size());
      nll_sum += -graph.total(iw) / len;
      graph.add_coefficient(iw, -inv_b / len);
    }
  }
  res.components["dpo"] = pref_sum * inv_b;
  if (with_nll) res.components["nll"] = nll_sum * inv_b;
  res.value = (pref_sum + nll_sum) * inv_b;
  if (need_grad) res.grad = lm::backward(policy, graph);
  return res;
}

inline LossResult dpo_loss(const lm::Model& policy, std::span<const PairExample> batch, double beta,
                           bool need_grad = true) {
  return dpo_family_loss(policy, batch, beta, false, need_grad);
}

inline LossResult dpo_nll_loss(const lm::Model& policy, std::span<const PairExample> batch, double beta,
                               bool need_grad = true) {
  return dpo_family_loss(policy, batch, beta, true, need_grad);
}

struct KtoExample {
  TokenSeq prompt, response;
  bool desirable = true;
  double ref_logp = 0.0;
};

// Chosen responses become desirable examples, rejected ones undesirable.
inline std::vector<KtoExample> make_kto_examples(const lm::Model& reference, std::span<const PreferencePair> pairs) {
  std::vector<KtoExample> out;
  out.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    out.push_back({p.prompt, p.chosen, true, lm::sequence_logprob(reference, p.prompt, p.chosen)});
    out.push_back({p.prompt, p.rejected, false, lm::sequence_logprob(reference, p.prompt, p.rejected)});
  }
  return out;
}

// KL baseline: max(0, mean of beta * logratio over mismatched pairings).
// After a canonical sort, prompt i is paired with the response of example
// (i + 1) mod n. No gradient flows through the result.
inline double estimate_zref(const lm::Model& policy, const lm::Model& reference, std::span<const KtoExample> batch,
                            double beta) {
  require(!batch.empty(), ErrorKind::empty_input, "estimate_zref on an empty batch");
  lm::check_same_vocab(policy, reference);
  std::vector<const KtoExample*> order;
  for (const auto& e : batch) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const KtoExample* a, const KtoExample* b) {
    return std::tie(a->prompt, a->response, a->desirable) < std::tie(b->prompt, b->response, b->desirable);
  });
  double sum = 0.0;
  const std::size_t n = order.size();
  for (std::size_t i = 0; i < n; ++i) {
    const TokenSeq& x = order[i]->prompt;
    const TokenSeq& y = order[(i + 1) % n]->response;
    sum += beta * (lm::sequence_logprob(policy, x, y) - lm::sequence_logprob(reference, x, y));
  }
  return std::max(0.0, sum / static_cast<double>(n));
}

// mean(lambda_y - v(x, y)) with
//   v = lambda_w * sigmoid(beta*logratio - z_ref)   (desirable)
//   v = lambda_l * sigmoid(z_ref - beta*logratio)   (undesirable)
// z_ref is supplied by the caller and treated as a constant.
inline LossResult kto_loss(const lm::Model& policy, std::span<const KtoExample> batch, double beta,
                           double lambda_w, double lambda_l, double z_ref, bool need_grad = true) {
  require(!batch.empty(), ErrorKind::empty_input, "kto loss on an empty batch");
  require(beta > 0.0, ErrorKind::invalid_argument, "beta must be positive");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  lm::LossGraph graph;
  double sum = 0.0;
  for (const auto& ex : batch) {
    const std::size_t i = graph.add(lm::forward_record(policy, ex.prompt, ex.response));
    const double r = beta * (graph.total(i) - ex.ref_logp);
    if (ex.desirable) {
      const double s = sigmoid(r - z_ref);
      sum += lambda_w - lambda_w * s;
      graph.set_coefficient(i, -lambda_w * s * (1.0 - s) * beta * inv_b);
    } else {
      const double s = sigmoid(z_ref - r);
      sum += lambda_l - lambda_l * s;
      graph.set_coefficient(i, lambda_l * s * (1.0 - s) * beta * inv_b);
    }
  }
  LossResult res;
  res.value = sum * inv_b;
  res.components["kto"] = res.value;
  res.components["z_ref"] = z_ref;
  if (need_grad) res.grad = lm::backward(policy, graph);
  return res;
}

// Token-level cross-entropy over response tokens; used for SFT.
struct SftExample {
  TokenSeq prompt, response;
};

inline LossResult sft_loss(const lm::Model& policy, std::span<const SftExample> batch, bool need_grad = true) {
  require(!batch.empty(), ErrorKind::empty_input, "sft loss on an empty batch");
  lm::LossGraph graph;
  double total_tokens = 0.0, sum = 0.0;
  for (const auto& ex : batch) total_tokens += static_cast<double>(ex.response.size());
  require(total_tokens > 0, ErrorKind::invalid_argument, "sft batch has no response tokens");
  for (const auto& ex : batch) {
    const std::size_t i = graph.add(lm::forward_record(policy, ex.prompt, ex.response));
    sum -= graph.total(i);
    graph.set_coefficient(i, -1.0 / total_tokens);
  }
  LossResult res;
  res.value = sum / total_tokens;
  res.components["nll"] = res.value;
  if (need_grad) res.grad = lm::backward(policy, graph);
  return res;
}

}  // namespace icr::train
