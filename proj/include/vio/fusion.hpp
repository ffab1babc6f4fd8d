#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vio/nn.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Scaled dot-product attention
// ---------------------------------------------------------------------------

// q: (Tq, d), k: (S, d), v: (S, dv) -> (Tq, dv), weights softmax(q kᵀ / √d).
// When `weights_out` is given it receives the (Tq, S) attention matrix.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        Tensor* weights_out = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("attention: expects rank-2 q, k, v");
  if (q.dim(1) != k.dim(1))
    throw DimensionError("attention: query width " + shape_str(q.shape()) +
                         " does not match key width " + shape_str(k.shape()));
  if (k.dim(0) != v.dim(0))
    throw DimensionError("attention: key count " + shape_str(k.shape()) +
                         " does not match value count " + shape_str(v.shape()));
  double scale_factor = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(matmul(q, transpose(k)), scale_factor);
  Tensor weights = softmax(scores, 1);
  if (weights_out) *weights_out = weights;
  return matmul(weights, v);
}

// ---------------------------------------------------------------------------
// Fusion configuration
// ---------------------------------------------------------------------------

struct AttentionConfig {
  int model_width = 16;  // token width N
  int num_heads = 4;     // n
  int head_width = 4;    // d_k
  int tokens = 2;        // token count the fused vector is reshaped into
  bool bias = false;     // per-head and output projection biases
};

struct FusionConfig {
  std::string strategy = "mha";  // mha | concat | soft
  int vision_width = 16;
  int inertial_width = 16;
  AttentionConfig attention;

  int fused_width() const { return vision_width + inertial_width; }

  void validate() const {
    if (strategy != "mha" && strategy != "concat" && strategy != "soft")
      throw ConfigError("fusion: unknown strategy '" + strategy + "'");
    if (vision_width < 1 || inertial_width < 1)
      throw ConfigError("fusion: feature widths must be positive");
    if (strategy == "mha") {
      if (attention.tokens < 1 || attention.model_width < 1 || attention.num_heads < 1 ||
          attention.head_width < 1)
        throw ConfigError("fusion: attention dimensions must be positive");
      if (attention.tokens * attention.model_width != fused_width())
        throw ConfigError("fusion: tokens x model_width = " +
                          std::to_string(attention.tokens * attention.model_width) +
                          " must equal fused width " + std::to_string(fused_width()));
    }
  }
};

// Demonstration-scale configuration. With 256-wide features per stream, two
// 256-wide tokens, 8 heads of width 128 and no biases, the three strategies
// count 262,656 (concat) < 525,312 (soft) < 1,048,576 (mha) learned fusion
// parameters.
inline FusionConfig demo_scale_fusion_config(const std::string& strategy) {
  FusionConfig cfg;
  cfg.strategy = strategy;
  cfg.vision_width = 256;
  cfg.inertial_width = 256;
  cfg.attention.model_width = 256;
  cfg.attention.num_heads = 8;
  cfg.attention.head_width = 128;
  cfg.attention.tokens = 2;
  cfg.attention.bias = false;
  return cfg;
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

// Multi-head self-attention over the tokenized concatenation of the two
// feature streams. The fused vector is reshaped into `tokens` equal-width
// tokens (default 2: one visual, one inertial), self-attended by n parallel
// heads with per-head (N, d_k) query/key/value projections, head outputs
// concatenated and projected back to token width by the (n*d_k, N) output
// matrix, then flattened. No positional encoding: the fixed two-token
// modality layout makes position redundant.
class MhaFusion {
 public:
  MhaFusion() = default;
  MhaFusion(const FusionConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const AttentionConfig& a = cfg.attention;
    for (int h = 0; h < a.num_heads; ++h) {
      Head head;
      head.wq = glorot_uniform({a.model_width, a.head_width}, a.model_width, a.head_width, rng);
      head.wk = glorot_uniform({a.model_width, a.head_width}, a.model_width, a.head_width, rng);
      head.wv = glorot_uniform({a.model_width, a.head_width}, a.model_width, a.head_width, rng);
      if (a.bias) {
        head.bq = Tensor::zeros({a.head_width}, true);
        head.bk = Tensor::zeros({a.head_width}, true);
        head.bv = Tensor::zeros({a.head_width}, true);
      }
      heads_.push_back(std::move(head));
    }
    w_out_ = glorot_uniform({a.num_heads * a.head_width, a.model_width},
                            a.num_heads * a.head_width, a.model_width, rng);
    if (a.bias) b_out_ = Tensor::zeros({a.model_width}, true);
  }

  // b_v: (1, vision_width), b_i: (1, inertial_width) -> (1, fused_width)
  Tensor forward(const Tensor& b_v, const Tensor& b_i) const {
    Tensor tokens = tokenize(b_v, b_i);
    Tensor attended = attend(tokens);
    return reshape(attended, {1, cfg_.fused_width()});
  }

  Tensor tokenize(const Tensor& b_v, const Tensor& b_i) const {
    check_stream_widths(cfg_, b_v, b_i);
    Tensor fused = concat({b_v, b_i}, 1);
    return reshape(fused, {cfg_.attention.tokens, cfg_.attention.model_width});
  }

  // tokens: (T, N) -> (T, N); optionally exposes per-head attention weights.
  Tensor attend(const Tensor& tokens, std::vector<Tensor>* head_weights = nullptr) const {
    std::vector<Tensor> outputs;
    outputs.reserve(heads_.size());
    for (const Head& h : heads_) {
      Tensor q = matmul(tokens, h.wq);
      Tensor k = matmul(tokens, h.wk);
      Tensor v = matmul(tokens, h.wv);
      if (h.bq.defined()) {
        q = add_rowbias(q, h.bq);
        k = add_rowbias(k, h.bk);
        v = add_rowbias(v, h.bv);
      }
      Tensor w;
      outputs.push_back(attention(q, k, v, head_weights ? &w : nullptr));
      if (head_weights) head_weights->push_back(w);
    }
    Tensor cat = concat(outputs, 1);  // (T, n*d_k)
    Tensor y = matmul(cat, w_out_);
    if (b_out_.defined()) y = add_rowbias(y, b_out_);
    return y;
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const std::string p = prefix + ".head" + std::to_string(h);
      out[p + ".wq"] = heads_[h].wq;
      out[p + ".wk"] = heads_[h].wk;
      out[p + ".wv"] = heads_[h].wv;
      if (heads_[h].bq.defined()) {
        out[p + ".bq"] = heads_[h].bq;
        out[p + ".bk"] = heads_[h].bk;
        out[p + ".bv"] = heads_[h].bv;
      }
    }
    out[prefix + ".w_out"] = w_out_;
    if (b_out_.defined()) out[prefix + ".b_out"] = b_out_;
  }

  struct Head {
    Tensor wq, wk, wv;  // (N, d_k)
    Tensor bq, bk, bv;  // (d_k), defined only with bias enabled
  };

  std::vector<Head>& heads() { return heads_; }
  Tensor& output_projection() { return w_out_; }

 private:
  static void check_stream_widths(const FusionConfig& cfg, const Tensor& b_v, const Tensor& b_i) {
    if (b_v.rank() != 2 || b_v.dim(1) != cfg.vision_width)
      throw DimensionError("fusion: vision features " + shape_str(b_v.shape()) +
                           " do not match width " + std::to_string(cfg.vision_width));
    if (b_i.rank() != 2 || b_i.dim(1) != cfg.inertial_width)
      throw DimensionError("fusion: inertial features " + shape_str(b_i.shape()) +
                           " do not match width " + std::to_string(cfg.inertial_width));
  }

  FusionConfig cfg_;
  std::vector<Head> heads_;
  Tensor w_out_;  // (n*d_k, N)
  Tensor b_out_;
};

// Linear layer over the plain concatenation: f(u, v) = W concat(u, v) + a.
class ConcatFusion {
 public:
  ConcatFusion() = default;
  ConcatFusion(const FusionConfig& cfg, Rng& rng)
      : cfg_(cfg), lin_(cfg.fused_width(), cfg.fused_width(), true, rng) {
    cfg.validate();
  }

  Tensor forward(const Tensor& b_v, const Tensor& b_i) const {
    return lin_.forward(concat({b_v, b_i}, 1));
  }

  void collect(const std::string& prefix, ParamMap& out) const { lin_.collect(prefix + ".lin", out); }

  Linear& linear() { return lin_; }

 private:
  FusionConfig cfg_;
  Linear lin_;
};

// Deterministic soft re-weighting: a sigmoid gate computed from the
// concatenated features scales them elementwise before a linear layer.
class SoftFusion {
 public:
  SoftFusion() = default;
  SoftFusion(const FusionConfig& cfg, Rng& rng)
      : cfg_(cfg),
        gate_(cfg.fused_width(), cfg.fused_width(), true, rng),
        lin_(cfg.fused_width(), cfg.fused_width(), true, rng) {
    cfg.validate();
  }

  Tensor forward(const Tensor& b_v, const Tensor& b_i) const {
    Tensor fused = concat({b_v, b_i}, 1);
    Tensor s = sigmoid(gate_.forward(fused));
    return lin_.forward(mul(s, fused));
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    gate_.collect(prefix + ".gate", out);
    lin_.collect(prefix + ".lin", out);
  }

  Linear& gate() { return gate_; }
  Linear& linear() { return lin_; }

 private:
  FusionConfig cfg_;
  Linear gate_, lin_;
};

// Strategy-tagged wrapper. Every variant maps (1, vision_width) x
// (1, inertial_width) to (1, fused_width), so the downstream model is
// strategy-agnostic.
class FusionStrategy {
 public:
  FusionStrategy() = default;
  FusionStrategy(const FusionConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    if (cfg.strategy == "mha")
      mha_ = MhaFusion(cfg, rng);
    else if (cfg.strategy == "concat")
      concat_ = ConcatFusion(cfg, rng);
    else
      soft_ = SoftFusion(cfg, rng);
  }

  Tensor forward(const Tensor& b_v, const Tensor& b_i) const {
    if (cfg_.strategy == "mha") return mha_.forward(b_v, b_i);
    if (cfg_.strategy == "concat") return concat_.forward(b_v, b_i);
    return soft_.forward(b_v, b_i);
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    if (cfg_.strategy == "mha")
      mha_.collect(prefix, out);
    else if (cfg_.strategy == "concat")
      concat_.collect(prefix, out);
    else
      soft_.collect(prefix, out);
  }

  const FusionConfig& config() const { return cfg_; }
  int output_width() const { return cfg_.fused_width(); }

  MhaFusion& mha() { return mha_; }
  ConcatFusion& concat_fusion() { return concat_; }
  SoftFusion& soft() { return soft_; }

 private:
  FusionConfig cfg_;
  MhaFusion mha_;
  ConcatFusion concat_;
  SoftFusion soft_;
};

// Closed-form learned-parameter count of the fusion block. Cross-checked in
// tests against enumerating the strategy's collected parameters.
inline std::int64_t count_fusion_params(const FusionConfig& cfg) {
  cfg.validate();
  std::int64_t f = cfg.fused_width();
  if (cfg.strategy == "concat") return f * f + f;
  if (cfg.strategy == "soft") return 2 * (f * f + f);
  const AttentionConfig& a = cfg.attention;
  std::int64_t n = a.num_heads, N = a.model_width, dk = a.head_width;
  std::int64_t count = n * 3 * N * dk + n * dk * N;
  if (a.bias) count += n * 3 * dk + N;
  return count;
}

}  // namespace vio
