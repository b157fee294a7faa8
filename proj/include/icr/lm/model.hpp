#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icr/error.hpp"
#include "icr/rng.hpp"

namespace icr::lm {

enum class ModelMode { bigram, transformer };

inline std::string to_string(ModelMode mode) {
  return mode == ModelMode::bigram ? "bigram" : "transformer";
}

inline ModelMode parse_mode(const std::string& s) {
  if (s == "bigram") return ModelMode::bigram;
  if (s == "transformer") return ModelMode::transformer;
  fail(ErrorKind::invalid_argument, "unknown model mode '" + s + "'");
}

// All arithmetic is carried out in 64-bit floats. Bigram mode ignores the
// transformer dimensions.
struct ModelConfig {
  ModelMode mode = ModelMode::transformer;
  int vocab_size = 0;
  int context_len = 64;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int mlp_ratio = 4;

  void validate() const {
    require(vocab_size >= 4, ErrorKind::invalid_argument, "vocab_size must be >= 4");
    require(context_len >= 2, ErrorKind::invalid_argument, "context_len must be >= 2");
    if (mode == ModelMode::bigram) return;
    require(d_model >= 1 && n_layers >= 1 && n_heads >= 1 && mlp_ratio >= 1,
            ErrorKind::invalid_argument, "transformer dimensions must be positive");
    require(d_model % n_heads == 0, ErrorKind::invalid_argument, "d_model must be divisible by n_heads");
  }

  int head_dim() const { return d_model / n_heads; }
  int hidden_dim() const { return d_model * mlp_ratio; }

  bool operator==(const ModelConfig&) const = default;
};

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

// Offsets of one transformer block inside the flat parameter vector.
struct BlockOffsets {
  std::size_t ln1_g, ln1_b;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_g, ln2_b;
  std::size_t w1, b1, w2, b2;
};

// Named-segment layout of the flat parameter vector. Matrices are row-major
// [in][out] so that y = x W reads W row by row.
//
// transformer:
//   tok_emb [V][d], pos_emb [C][d],
//   per layer i: layer{i}.{ln1.g, ln1.b, attn.wq, attn.bq, attn.wk, attn.bk,
//     attn.wv, attn.bv, attn.wo, attn.bo, ln2.g, ln2.b, mlp.w1, mlp.b1,
//     mlp.w2, mlp.b2},
//   lnf.g, lnf.b, out.w [d][V], out.b [V]
// bigram:
//   table [V][V]  (row = previous token, column = next-token logit)
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
    if (cfg.mode == ModelMode::bigram) {
      table_ = add("table", V, V);
      return;
    }
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t h = static_cast<std::size_t>(cfg.hidden_dim());
    tok_emb_ = add("tok_emb", V, d);
    pos_emb_ = add("pos_emb", static_cast<std::size_t>(cfg.context_len), d);
    for (int i = 0; i < cfg.n_layers; ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      BlockOffsets b{};
      b.ln1_g = add(p + "ln1.g", 1, d);
      b.ln1_b = add(p + "ln1.b", 1, d);
      b.wq = add(p + "attn.wq", d, d);
      b.bq = add(p + "attn.bq", 1, d);
      b.wk = add(p + "attn.wk", d, d);
      b.bk = add(p + "attn.bk", 1, d);
      b.wv = add(p + "attn.wv", d, d);
      b.bv = add(p + "attn.bv", 1, d);
      b.wo = add(p + "attn.wo", d, d);
      b.bo = add(p + "attn.bo", 1, d);
      b.ln2_g = add(p + "ln2.g", 1, d);
      b.ln2_b = add(p + "ln2.b", 1, d);
      b.w1 = add(p + "mlp.w1", d, h);
      b.b1 = add(p + "mlp.b1", 1, h);
      b.w2 = add(p + "mlp.w2", h, d);
      b.b2 = add(p + "mlp.b2", 1, d);
      blocks_.push_back(b);
    }
    lnf_g_ = add("lnf.g", 1, d);
    lnf_b_ = add("lnf.b", 1, d);
    out_w_ = add("out.w", d, V);
    out_b_ = add("out.b", 1, V);
  }

  std::size_t total() const { return total_; }
  const std::vector<Segment>& segments() const { return segments_; }

  const Segment& find(const std::string& name) const {
    for (const auto& s : segments_)
      if (s.name == name) return s;
    fail(ErrorKind::invalid_argument, "no parameter segment named '" + name + "'");
  }

  std::size_t table() const { return table_; }
  std::size_t tok_emb() const { return tok_emb_; }
  std::size_t pos_emb() const { return pos_emb_; }
  const BlockOffsets& block(std::size_t i) const { return blocks_[i]; }
  std::size_t lnf_g() const { return lnf_g_; }
  std::size_t lnf_b() const { return lnf_b_; }
  std::size_t out_w() const { return out_w_; }
  std::size_t out_b() const { return out_b_; }

 private:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    segments_.push_back(Segment{std::move(name), total_, rows, cols});
    const std::size_t at = total_;
    total_ += rows * cols;
    return at;
  }

  std::vector<Segment> segments_;
  std::vector<BlockOffsets> blocks_;
  std::size_t total_ = 0;
  std::size_t table_ = 0, tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, out_w_ = 0, out_b_ = 0;
};

inline bool is_norm_gain(const std::string& name) { return name.ends_with(".g"); }
inline bool is_bias(const std::string& name) {
  return name.ends_with(".b") || name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") ||
         name.ends_with(".bo") || name.ends_with(".b1") || name.ends_with(".b2");
}

// A model handle: configuration, layout, and parameters. Plays any of the
// policy / reference / initial roles.
struct Model {
  ModelConfig config;
  ParameterLayout layout;
  std::vector<double> params;
  std::string vocab_fingerprint;
  std::uint64_t seed = 0;

  explicit Model(const ModelConfig& cfg) : config(cfg), layout(cfg), params(layout.total(), 0.0) {}

  std::size_t size() const { return params.size(); }

  void check_finite() const {
    for (double p : params)
      require(std::isfinite(p), ErrorKind::non_finite, "non-finite parameter");
  }
};

// Gaussian(0, 0.02) weights, zero biases and norm offsets, unit norm gains.
inline Model init_model(const ModelConfig& cfg, std::uint64_t seed, double init_std = 0.02) {
  Model m(cfg);
  m.seed = seed;
  Rng rng(derive_seed(seed, {0x1A17}));
  for (const auto& seg : m.layout.segments()) {
    double* p = m.params.data() + seg.offset;
    if (is_norm_gain(seg.name)) {
      for (std::size_t i = 0; i < seg.size(); ++i) p[i] = 1.0;
    } else if (is_bias(seg.name)) {
      for (std::size_t i = 0; i < seg.size(); ++i) p[i] = 0.0;
    } else {
      for (std::size_t i = 0; i < seg.size(); ++i) p[i] = rng.normal(0.0, init_std);
    }
  }
  return m;
}

inline void check_same_vocab(const Model& a, const Model& b) {
  const bool fp_clash = !a.vocab_fingerprint.empty() && !b.vocab_fingerprint.empty() &&
                        a.vocab_fingerprint != b.vocab_fingerprint;
  if (a.config.vocab_size != b.config.vocab_size || fp_clash)
    fail(ErrorKind::vocabulary_mismatch, "policy and reference models use different vocabularies");
}

}  // namespace icr::lm
