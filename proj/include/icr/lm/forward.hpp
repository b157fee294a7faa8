#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "icr/error.hpp"
#include "icr/lm/model.hpp"
#include "icr/tokens.hpp"

namespace icr::lm {

struct LogProbResult {
  std::vector<double> per_token;
  double total = 0.0;
  std::size_t token_count = 0;
};

namespace detail {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)

// y[n][out] = x[n][in] * W[in][out] + b[out]
inline void matmul_bias(const double* x, const double* W, const double* b, double* y, std::size_t n,
                        std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < n; ++t) {
    double* yt = y + t * out;
    for (std::size_t j = 0; j < out; ++j) yt[j] = b[j];
    const double* xt = x + t * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xt[i];
      const double* Wi = W + i * out;
      for (std::size_t j = 0; j < out; ++j) yt[j] += xi * Wi[j];
    }
  }
}

// Accumulates dW += x^T dy, db += sum_t dy, and (if dx) dx = dy W^T.
inline void matmul_backward(const double* x, const double* W, const double* dy, double* dW, double* db,
                            double* dx, std::size_t n, std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < n; ++t) {
    const double* dyt = dy + t * out;
    const double* xt = x + t * in;
    for (std::size_t j = 0; j < out; ++j) db[j] += dyt[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xt[i];
      double* dWi = dW + i * out;
      const double* Wi = W + i * out;
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) {
        dWi[j] += xi * dyt[j];
        acc += Wi[j] * dyt[j];
      }
      if (dx) dx[t * in + i] = acc;
    }
  }
}

inline void layernorm(const double* x, const double* g, const double* b, double* y, double* mean,
                      double* rstd, std::size_t n, std::size_t d) {
  for (std::size_t t = 0; t < n; ++t) {
    const double* xt = x + t * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xt[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xt[i] - mu) * (xt[i] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    double* yt = y + t * d;
    for (std::size_t i = 0; i < d; ++i) yt[i] = (xt[i] - mu) * rs * g[i] + b[i];
    mean[t] = mu;
    rstd[t] = rs;
  }
}

// Adds the input gradient into dx (does not overwrite).
inline void layernorm_backward(const double* x, const double* g, const double* mean, const double* rstd,
                               const double* dy, double* dg, double* db, double* dx, std::size_t n,
                               std::size_t d) {
  std::vector<double> dxhat(d);
  for (std::size_t t = 0; t < n; ++t) {
    const double* xt = x + t * d;
    const double* dyt = dy + t * d;
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = (xt[i] - mean[t]) * rstd[t];
      dg[i] += dyt[i] * xhat;
      db[i] += dyt[i];
      dxhat[i] = dyt[i] * g[i];
      sum_dxhat += dxhat[i];
      sum_dxhat_xhat += dxhat[i] * xhat;
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = (xt[i] - mean[t]) * rstd[t];
      dx[t * d + i] += rstd[t] * (dxhat[i] - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
    }
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

// In-place log-softmax; returns nothing, row becomes log-probabilities.
inline void log_softmax(std::span<double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : row) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : row) v -= lse;
}

struct LayerCache {
  std::vector<double> x_in, ln1_out, ln1_mean, ln1_rstd;
  std::vector<double> q, k, v, att, att_out;
  std::vector<double> x_mid, ln2_out, ln2_mean, ln2_rstd;
  std::vector<double> mlp_pre, mlp_act;
};

}  // namespace detail

inline void validate_tokens(const ModelConfig& cfg, TokenSpan prompt, TokenSpan response) {
  require(!prompt.empty(), ErrorKind::invalid_argument, "prompt must be nonempty");
  const std::size_t total = prompt.size() + response.size();
  if (total > static_cast<std::size_t>(cfg.context_len))
    fail(ErrorKind::sequence_too_long, "prompt+response length " + std::to_string(total) +
                                           " exceeds context_len " + std::to_string(cfg.context_len));
  auto check = [&](TokenSpan s) {
    for (Token t : s)
      if (t < 0 || t >= cfg.vocab_size)
        fail(ErrorKind::token_out_of_range, "token id " + std::to_string(t) + " outside vocabulary of size " +
                                                std::to_string(cfg.vocab_size));
  };
  check(prompt);
  check(response);
}

// Activations of one (prompt, response) forward pass, kept for backward.
// Only response positions carry log-probability mass; the prompt conditions.
class ForwardRecord {
 public:
  const Model* model = nullptr;
  TokenSeq tokens;  // prompt ++ response
  std::size_t prompt_len = 0;
  LogProbResult result;

  bool recorded() const { return model != nullptr && !tokens.empty(); }
  std::size_t inputs() const { return tokens.size() - 1; }
  std::size_t response_len() const { return tokens.size() - prompt_len; }

  // Softmax probabilities at each response position, [R][V].
  std::vector<double> probs;

  // Transformer activations.
  std::vector<detail::LayerCache> layers;
  std::vector<double> x_final, lnf_out, lnf_mean, lnf_rstd;
};

namespace detail {

inline void forward_bigram(ForwardRecord& rec) {
  const Model& m = *rec.model;
  const std::size_t V = static_cast<std::size_t>(m.config.vocab_size);
  const std::size_t R = rec.response_len();
  rec.probs.assign(R * V, 0.0);
  rec.result.per_token.assign(R, 0.0);
  std::vector<double> row(V);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t pos = rec.prompt_len + r;
    const double* logits = m.params.data() + m.layout.table() + static_cast<std::size_t>(rec.tokens[pos - 1]) * V;
    std::copy(logits, logits + V, row.begin());
    log_softmax(row);
    rec.result.per_token[r] = row[static_cast<std::size_t>(rec.tokens[pos])];
    for (std::size_t v = 0; v < V; ++v) rec.probs[r * V + v] = std::exp(row[v]);
  }
}

inline void forward_transformer(ForwardRecord& rec) {
  const Model& m = *rec.model;
  const ModelConfig& cfg = m.config;
  const ParameterLayout& L = m.layout;
  const double* P = m.params.data();
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / H;
  const std::size_t hid = static_cast<std::size_t>(cfg.hidden_dim());
  const std::size_t n = rec.inputs();
  const std::size_t R = rec.response_len();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> x(n * d);
  for (std::size_t t = 0; t < n; ++t) {
    const double* te = P + L.tok_emb() + static_cast<std::size_t>(rec.tokens[t]) * d;
    const double* pe = P + L.pos_emb() + t * d;
    for (std::size_t i = 0; i < d; ++i) x[t * d + i] = te[i] + pe[i];
  }

  rec.layers.assign(static_cast<std::size_t>(cfg.n_layers), {});
  for (std::size_t l = 0; l < rec.layers.size(); ++l) {
    const BlockOffsets& b = L.block(l);
    LayerCache& c = rec.layers[l];
    c.x_in = x;
    c.ln1_out.resize(n * d);
    c.ln1_mean.resize(n);
    c.ln1_rstd.resize(n);
    layernorm(x.data(), P + b.ln1_g, P + b.ln1_b, c.ln1_out.data(), c.ln1_mean.data(), c.ln1_rstd.data(), n, d);
    c.q.resize(n * d);
    c.k.resize(n * d);
    c.v.resize(n * d);
    matmul_bias(c.ln1_out.data(), P + b.wq, P + b.bq, c.q.data(), n, d, d);
    matmul_bias(c.ln1_out.data(), P + b.wk, P + b.bk, c.k.data(), n, d, d);
    matmul_bias(c.ln1_out.data(), P + b.wv, P + b.bv, c.v.data(), n, d, d);

    c.att.assign(H * n * n, 0.0);
    c.att_out.assign(n * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double* a = c.att.data() + (h * n + i) * n;
        const double* qi = c.q.data() + i * d + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = c.k.data() + j * d + h * hd;
          double s = 0.0;
          for (std::size_t e = 0; e < hd; ++e) s += qi[e] * kj[e];
          a[j] = s * scale;
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          a[j] = std::exp(a[j] - mx);
          z += a[j];
        }
        double* oi = c.att_out.data() + i * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          a[j] /= z;
          const double* vj = c.v.data() + j * d + h * hd;
          for (std::size_t e = 0; e < hd; ++e) oi[e] += a[j] * vj[e];
        }
      }
    }
    std::vector<double> proj(n * d);
    matmul_bias(c.att_out.data(), P + b.wo, P + b.bo, proj.data(), n, d, d);
    c.x_mid.resize(n * d);
    for (std::size_t i = 0; i < n * d; ++i) c.x_mid[i] = x[i] + proj[i];

    c.ln2_out.resize(n * d);
    c.ln2_mean.resize(n);
    c.ln2_rstd.resize(n);
    layernorm(c.x_mid.data(), P + b.ln2_g, P + b.ln2_b, c.ln2_out.data(), c.ln2_mean.data(), c.ln2_rstd.data(), n,
              d);
    c.mlp_pre.resize(n * hid);
    matmul_bias(c.ln2_out.data(), P + b.w1, P + b.b1, c.mlp_pre.data(), n, d, hid);
    c.mlp_act.resize(n * hid);
    for (std::size_t i = 0; i < n * hid; ++i) c.mlp_act[i] = gelu(c.mlp_pre[i]);
    matmul_bias(c.mlp_act.data(), P + b.w2, P + b.b2, proj.data(), n, hid, d);
    for (std::size_t i = 0; i < n * d; ++i) x[i] = c.x_mid[i] + proj[i];
  }

  rec.x_final = x;
  rec.lnf_out.resize(n * d);
  rec.lnf_mean.resize(n);
  rec.lnf_rstd.resize(n);
  layernorm(x.data(), P + L.lnf_g(), P + L.lnf_b(), rec.lnf_out.data(), rec.lnf_mean.data(), rec.lnf_rstd.data(), n,
            d);

  // Logits only at positions that predict response tokens.
  rec.probs.assign(R * V, 0.0);
  rec.result.per_token.assign(R, 0.0);
  const std::size_t first = rec.prompt_len - 1;
  if (R > 0) {
    std::vector<double> logits(R * V);
    matmul_bias(rec.lnf_out.data() + first * d, P + L.out_w(), P + L.out_b(), logits.data(), R, d, V);
    for (std::size_t r = 0; r < R; ++r) {
      std::span<double> row(logits.data() + r * V, V);
      log_softmax(row);
      rec.result.per_token[r] = row[static_cast<std::size_t>(rec.tokens[rec.prompt_len + r])];
      for (std::size_t v = 0; v < V; ++v) rec.probs[r * V + v] = std::exp(row[v]);
    }
  }
}

}  // namespace detail

inline ForwardRecord forward_record(const Model& model, TokenSpan prompt, TokenSpan response) {
  validate_tokens(model.config, prompt, response);
  ForwardRecord rec;
  rec.model = &model;
  rec.tokens = concat(prompt, response);
  rec.prompt_len = prompt.size();
  if (model.config.mode == ModelMode::bigram)
    detail::forward_bigram(rec);
  else
    detail::forward_transformer(rec);
  rec.result.token_count = response.size();
  rec.result.total = 0.0;
  for (double lp : rec.result.per_token) rec.result.total += lp;
  return rec;
}

// Log-probability of the response given the prompt, summed over response
// tokens. Prompt tokens only condition.
inline LogProbResult forward_logprob(const Model& model, TokenSpan prompt, TokenSpan response) {
  return forward_record(model, prompt, response).result;
}

inline double sequence_logprob(const Model& model, TokenSpan prompt, TokenSpan response) {
  return forward_logprob(model, prompt, response).total;
}

// The differentiable part of a scalar loss: a set of recorded forward passes,
// each with the coefficient d(loss)/d(total log-prob of that sequence). Every
// loss in this project is a function of sequence log-prob totals.
class LossGraph {
 public:
  std::size_t add(ForwardRecord rec, double coefficient = 0.0) {
    entries_.push_back({std::move(rec), coefficient});
    return entries_.size() - 1;
  }

  const ForwardRecord& record(std::size_t i) const { return entries_[i].record; }
  double total(std::size_t i) const { return entries_[i].record.result.total; }
  void set_coefficient(std::size_t i, double c) { entries_[i].coefficient = c; }
  void add_coefficient(std::size_t i, double c) { entries_[i].coefficient += c; }
  double coefficient(std::size_t i) const { return entries_[i].coefficient; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  struct Entry {
    ForwardRecord record;
    double coefficient;
  };
  std::vector<Entry> entries_;
};

namespace detail {

inline void backward_bigram(const ForwardRecord& rec, double coeff, std::span<double> grad) {
  const Model& m = *rec.model;
  const std::size_t V = static_cast<std::size_t>(m.config.vocab_size);
  for (std::size_t r = 0; r < rec.response_len(); ++r) {
    const std::size_t pos = rec.prompt_len + r;
    double* g = grad.data() + m.layout.table() + static_cast<std::size_t>(rec.tokens[pos - 1]) * V;
    const double* p = rec.probs.data() + r * V;
    for (std::size_t v = 0; v < V; ++v) g[v] -= coeff * p[v];
    g[static_cast<std::size_t>(rec.tokens[pos])] += coeff;
  }
}

inline void backward_transformer(const ForwardRecord& rec, double coeff, std::span<double> grad) {
  const Model& m = *rec.model;
  const ModelConfig& cfg = m.config;
  const ParameterLayout& L = m.layout;
  const double* P = m.params.data();
  double* G = grad.data();
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / H;
  const std::size_t hid = static_cast<std::size_t>(cfg.hidden_dim());
  const std::size_t n = rec.inputs();
  const std::size_t R = rec.response_len();
  const std::size_t first = rec.prompt_len - 1;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // d(coeff * total)/d(logits) = coeff * (onehot - softmax) at response positions.
  std::vector<double> dlogits(R * V);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) dlogits[r * V + v] = -coeff * rec.probs[r * V + v];
    dlogits[r * V + static_cast<std::size_t>(rec.tokens[rec.prompt_len + r])] += coeff;
  }
  std::vector<double> dlnf(n * d, 0.0);
  matmul_backward(rec.lnf_out.data() + first * d, P + L.out_w(), dlogits.data(), G + L.out_w(), G + L.out_b(),
                  dlnf.data() + first * d, R, d, V);

  std::vector<double> dx(n * d, 0.0);
  layernorm_backward(rec.x_final.data(), P + L.lnf_g(), rec.lnf_mean.data(), rec.lnf_rstd.data(), dlnf.data(),
                     G + L.lnf_g(), G + L.lnf_b(), dx.data(), n, d);

  std::vector<double> dproj(n * d), dact(n * hid), dln(n * d), dq(n * d), dk(n * d), dv(n * d), datt_out(n * d),
      tmp(n * d), datt(n);
  for (std::size_t li = rec.layers.size(); li-- > 0;) {
    const BlockOffsets& b = L.block(li);
    const LayerCache& c = rec.layers[li];

    // MLP branch: x_out = x_mid + W2 gelu(W1 ln2(x_mid)).
    matmul_backward(c.mlp_act.data(), P + b.w2, dx.data(), G + b.w2, G + b.b2, dact.data(), n, hid, d);
    for (std::size_t i = 0; i < n * hid; ++i) dact[i] *= gelu_grad(c.mlp_pre[i]);
    matmul_backward(c.ln2_out.data(), P + b.w1, dact.data(), G + b.w1, G + b.b1, dln.data(), n, d, hid);
    // dx now holds d/dx_mid from the residual; add the norm path.
    layernorm_backward(c.x_mid.data(), P + b.ln2_g, c.ln2_mean.data(), c.ln2_rstd.data(), dln.data(), G + b.ln2_g,
                       G + b.ln2_b, dx.data(), n, d);

    // Attention branch: x_mid = x_in + Wo attn(ln1(x_in)).
    matmul_backward(c.att_out.data(), P + b.wo, dx.data(), G + b.wo, G + b.bo, datt_out.data(), n, d, d);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* a = c.att.data() + (h * n + i) * n;
        const double* doi = datt_out.data() + i * d + h * hd;
        double dot_sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* vj = c.v.data() + j * d + h * hd;
          double* dvj = dv.data() + j * d + h * hd;
          double s = 0.0;
          for (std::size_t e = 0; e < hd; ++e) {
            s += doi[e] * vj[e];
            dvj[e] += a[j] * doi[e];
          }
          datt[j] = s;
          dot_sum += a[j] * s;
        }
        const double* qi = c.q.data() + i * d + h * hd;
        double* dqi = dq.data() + i * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = a[j] * (datt[j] - dot_sum) * scale;
          const double* kj = c.k.data() + j * d + h * hd;
          double* dkj = dk.data() + j * d + h * hd;
          for (std::size_t e = 0; e < hd; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }
    matmul_backward(c.ln1_out.data(), P + b.wq, dq.data(), G + b.wq, G + b.bq, dln.data(), n, d, d);
    matmul_backward(c.ln1_out.data(), P + b.wk, dk.data(), G + b.wk, G + b.bk, tmp.data(), n, d, d);
    for (std::size_t i = 0; i < n * d; ++i) dln[i] += tmp[i];
    matmul_backward(c.ln1_out.data(), P + b.wv, dv.data(), G + b.wv, G + b.bv, tmp.data(), n, d, d);
    for (std::size_t i = 0; i < n * d; ++i) dln[i] += tmp[i];
    layernorm_backward(c.x_in.data(), P + b.ln1_g, c.ln1_mean.data(), c.ln1_rstd.data(), dln.data(), G + b.ln1_g,
                       G + b.ln1_b, dx.data(), n, d);
  }

  for (std::size_t t = 0; t < n; ++t) {
    double* gte = G + L.tok_emb() + static_cast<std::size_t>(rec.tokens[t]) * d;
    double* gpe = G + L.pos_emb() + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      gte[i] += dx[t * d + i];
      gpe[i] += dx[t * d + i];
    }
  }
}

}  // namespace detail

// Accumulates coeff * d(total log-prob)/d(params) of one record into grad.
inline void backward_record(const ForwardRecord& rec, double coeff, std::span<double> grad) {
  if (!rec.recorded()) fail(ErrorKind::no_recorded_forward, "backward called without a recorded forward pass");
  require(grad.size() == rec.model->size(), ErrorKind::shape_mismatch, "gradient length does not match parameters");
  if (coeff == 0.0 || rec.response_len() == 0) return;
  if (rec.model->config.mode == ModelMode::bigram)
    detail::backward_bigram(rec, coeff, grad);
  else
    detail::backward_transformer(rec, coeff, grad);
}

// Exact reverse-mode gradient of the loss represented by the graph. Records
// are reduced in insertion order, so results are reproducible bit for bit.
inline std::vector<double> backward(const Model& model, const LossGraph& graph) {
  std::vector<double> grad(model.size(), 0.0);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const ForwardRecord& rec = graph.record(i);
    if (!rec.recorded()) fail(ErrorKind::no_recorded_forward, "loss graph entry has no recorded forward pass");
    if (rec.model != &model)
      fail(ErrorKind::invalid_argument, "loss graph entry was recorded against a different model");
    backward_record(rec, graph.coefficient(i), grad);
  }
  return grad;
}

}  // namespace icr::lm
