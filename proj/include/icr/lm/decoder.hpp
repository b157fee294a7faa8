#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "icr/error.hpp"
#include "icr/lm/forward.hpp"
#include "icr/lm/model.hpp"
#include "icr/tokens.hpp"

namespace icr::lm {

// Incremental next-token logits for autoregressive generation. The
// transformer path caches per-layer keys and values so each step costs one
// position. Inference only; nothing here is differentiated.
class Decoder {
 public:
  explicit Decoder(const Model& model) : model_(model) {
    const auto& cfg = model.config;
    V_ = static_cast<std::size_t>(cfg.vocab_size);
    logits_.resize(V_);
    if (cfg.mode == ModelMode::transformer) {
      d_ = static_cast<std::size_t>(cfg.d_model);
      const std::size_t C = static_cast<std::size_t>(cfg.context_len);
      keys_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<double>(C * d_));
      values_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<double>(C * d_));
    }
  }

  std::size_t length() const { return len_; }

  // Feeds the whole prompt; returns logits for the first response token.
  std::span<const double> start(TokenSpan prompt) {
    validate_tokens(model_.config, prompt, {});
    len_ = 0;
    for (Token t : prompt) push(t);
    return logits_;
  }

  // Appends one token; returns logits for the following position.
  std::span<const double> step(Token t) {
    require(t >= 0 && t < model_.config.vocab_size, ErrorKind::token_out_of_range, "token outside vocabulary");
    push(t);
    return logits_;
  }

 private:
  void push(Token t) {
    if (len_ >= static_cast<std::size_t>(model_.config.context_len))
      fail(ErrorKind::sequence_too_long, "decoder exceeded context_len");
    if (model_.config.mode == ModelMode::bigram) {
      const double* row = model_.params.data() + model_.layout.table() + static_cast<std::size_t>(t) * V_;
      std::copy(row, row + V_, logits_.begin());
    } else {
      push_transformer(t);
    }
    ++len_;
  }

  void push_transformer(Token tok) {
    using namespace detail;
    const ModelConfig& cfg = model_.config;
    const ParameterLayout& L = model_.layout;
    const double* P = model_.params.data();
    const std::size_t d = d_;
    const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
    const std::size_t hd = d / H;
    const std::size_t hid = static_cast<std::size_t>(cfg.hidden_dim());
    const std::size_t pos = len_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<double> x(d), h(d), q(d), o(d), proj(d), a(pos + 1), mlp(hid);
    double mean = 0.0, rstd = 0.0;
    const double* te = P + L.tok_emb() + static_cast<std::size_t>(tok) * d;
    const double* pe = P + L.pos_emb() + pos * d;
    for (std::size_t i = 0; i < d; ++i) x[i] = te[i] + pe[i];

    for (std::size_t l = 0; l < keys_.size(); ++l) {
      const BlockOffsets& b = L.block(l);
      layernorm(x.data(), P + b.ln1_g, P + b.ln1_b, h.data(), &mean, &rstd, 1, d);
      matmul_bias(h.data(), P + b.wq, P + b.bq, q.data(), 1, d, d);
      double* kp = keys_[l].data() + pos * d;
      double* vp = values_[l].data() + pos * d;
      matmul_bias(h.data(), P + b.wk, P + b.bk, kp, 1, d, d);
      matmul_bias(h.data(), P + b.wv, P + b.bv, vp, 1, d, d);
      std::fill(o.begin(), o.end(), 0.0);
      for (std::size_t hh = 0; hh < H; ++hh) {
        const double* qh = q.data() + hh * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= pos; ++j) {
          const double* kj = keys_[l].data() + j * d + hh * hd;
          double s = 0.0;
          for (std::size_t e = 0; e < hd; ++e) s += qh[e] * kj[e];
          a[j] = s * scale;
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= pos; ++j) {
          a[j] = std::exp(a[j] - mx);
          z += a[j];
        }
        double* oh = o.data() + hh * hd;
        for (std::size_t j = 0; j <= pos; ++j) {
          const double w = a[j] / z;
          const double* vj = values_[l].data() + j * d + hh * hd;
          for (std::size_t e = 0; e < hd; ++e) oh[e] += w * vj[e];
        }
      }
      matmul_bias(o.data(), P + b.wo, P + b.bo, proj.data(), 1, d, d);
      for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];
      layernorm(x.data(), P + b.ln2_g, P + b.ln2_b, h.data(), &mean, &rstd, 1, d);
      matmul_bias(h.data(), P + b.w1, P + b.b1, mlp.data(), 1, d, hid);
      for (double& v : mlp) v = gelu(v);
      matmul_bias(mlp.data(), P + b.w2, P + b.b2, proj.data(), 1, hid, d);
      for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];
    }
    layernorm(x.data(), P + L.lnf_g(), P + L.lnf_b(), h.data(), &mean, &rstd, 1, d);
    matmul_bias(h.data(), P + L.out_w(), P + L.out_b(), logits_.data(), 1, d, V_);
  }

  const Model& model_;
  std::size_t V_ = 0, d_ = 0, len_ = 0;
  std::vector<double> logits_;
  std::vector<std::vector<double>> keys_, values_;
};

}  // namespace icr::lm
