#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vio/tensor.hpp"

namespace vio {

// Named learned parameters. Ordered map so checkpoint files, enumeration-based
// parameter counts, and optimizer traversal all share one deterministic order.
using ParamMap = std::map<std::string, Tensor>;

inline std::int64_t param_count(const ParamMap& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

// Uniform init on [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
  return t;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, bool with_bias, Rng& rng)
      : in_(in_features), out_(out_features) {
    w = glorot_uniform({out_features, in_features}, in_features, out_features, rng);
    if (with_bias) b = Tensor::zeros({out_features}, true);
  }

  // x: (batch, in) -> (batch, out)
  Tensor forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match in_features " +
                           std::to_string(in_));
    Tensor y = matmul(x, transpose(w));
    if (b.defined()) y = add_rowbias(y, b);
    return y;
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    if (b.defined()) out[prefix + ".b"] = b;
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Tensor w;  // (out, in)
  Tensor b;  // (out), undefined when bias disabled

 private:
  int in_ = 0, out_ = 0;
};

// ---------------------------------------------------------------------------
// Conv2d layer
// ---------------------------------------------------------------------------

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int in_ch, int out_ch, int kernel, int stride, int pad, bool with_bias, Rng& rng)
      : stride_(stride), pad_(pad) {
    int fan_in = in_ch * kernel * kernel;
    int fan_out = out_ch * kernel * kernel;
    w = glorot_uniform({out_ch, in_ch, kernel, kernel}, fan_in, fan_out, rng);
    if (with_bias) b = Tensor::zeros({out_ch}, true);
  }

  // x: (in_ch, H, W) -> (out_ch, H', W')
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride_, pad_); }

  void collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    if (b.defined()) out[prefix + ".b"] = b;
  }

  int stride() const { return stride_; }
  int pad() const { return pad_; }

  Tensor w;  // (out_ch, in_ch, k, k)
  Tensor b;  // (out_ch), undefined when bias disabled

 private:
  int stride_ = 1, pad_ = 0;
};

// ---------------------------------------------------------------------------
// Batch normalization over channels of a (C, H, W) activation
// ---------------------------------------------------------------------------

namespace detail {

// Training mode normalizes by the per-channel spatial statistics of the current
// sample and updates running stats in place; eval mode applies the stored
// running statistics as a fixed per-channel affine.
inline Tensor batchnorm_spatial(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                Tensor& running_mean, Tensor& running_var, bool training,
                                double momentum, double eps) {
  if (x.rank() != 3)
    throw DimensionError("batchnorm: expects (C,H,W) input, got " + shape_str(x.shape()));
  int c = x.dim(0), m = x.dim(1) * x.dim(2);
  if (gamma.dim(0) != c || beta.dim(0) != c)
    throw DimensionError("batchnorm: affine shapes " + shape_str(gamma.shape()) +
                         " do not match " + std::to_string(c) + " channels");

  std::vector<double> mu(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      const double* xd = x.data() + static_cast<std::size_t>(ch) * m;
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += xd[i];
      mu[static_cast<std::size_t>(ch)] = s / m;
      double v = 0.0;
      for (int i = 0; i < m; ++i) {
        double d = xd[i] - mu[static_cast<std::size_t>(ch)];
        v += d * d;
      }
      var[static_cast<std::size_t>(ch)] = v / m;
    }
    for (int ch = 0; ch < c; ++ch) {
      running_mean.data()[ch] = (1.0 - momentum) * running_mean.data()[ch] + momentum * mu[static_cast<std::size_t>(ch)];
      running_var.data()[ch] = (1.0 - momentum) * running_var.data()[ch] + momentum * var[static_cast<std::size_t>(ch)];
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mu[static_cast<std::size_t>(ch)] = running_mean.data()[ch];
      var[static_cast<std::size_t>(ch)] = running_var.data()[ch];
    }
  }

  std::vector<double> xhat(static_cast<std::size_t>(x.size()));
  std::vector<double> d(static_cast<std::size_t>(x.size()));
  for (int ch = 0; ch < c; ++ch) {
    double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
    const double* xd = x.data() + static_cast<std::size_t>(ch) * m;
    for (int i = 0; i < m; ++i) {
      std::size_t idx = static_cast<std::size_t>(ch) * m + i;
      xhat[idx] = (xd[i] - mu[static_cast<std::size_t>(ch)]) * inv;
      d[idx] = gamma.data()[ch] * xhat[idx] + beta.data()[ch];
    }
  }
  Tensor out = make_op_output(x.shape(), std::move(d), "batchnorm", {x, gamma, beta});
  auto* xn = x.node();
  auto* gn = gamma.node();
  auto* bn = beta.node();
  auto* on = out.node();
  auto saved_xhat = std::make_shared<std::vector<double>>(std::move(xhat));
  auto saved_var = std::make_shared<std::vector<double>>(std::move(var));
  attach_backward(out, [xn, gn, bn, on, saved_xhat, saved_var, c, m, eps, training] {
    for (int ch = 0; ch < c; ++ch) {
      double inv = 1.0 / std::sqrt((*saved_var)[static_cast<std::size_t>(ch)] + eps);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < m; ++i) {
        std::size_t idx = static_cast<std::size_t>(ch) * m + i;
        sum_dy += on->grad[idx];
        sum_dy_xhat += on->grad[idx] * (*saved_xhat)[idx];
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        gn->grad[static_cast<std::size_t>(ch)] += sum_dy_xhat;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[static_cast<std::size_t>(ch)] += sum_dy;
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        double g = gn->data[static_cast<std::size_t>(ch)];
        for (int i = 0; i < m; ++i) {
          std::size_t idx = static_cast<std::size_t>(ch) * m + i;
          double dy = on->grad[idx];
          if (training)
            xn->grad[idx] += g * inv * (dy - sum_dy / m - (*saved_xhat)[idx] * sum_dy_xhat / m);
          else
            xn->grad[idx] += g * inv * dy;
        }
      }
    }
  });
  return out;
}

}  // namespace detail

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    return detail::batchnorm_spatial(x, gamma, beta, running_mean, running_var, training,
                                     momentum_, eps_);
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".gamma"] = gamma;
    out[prefix + ".beta"] = beta;
  }
  // Running stats are state, not learned parameters; persisted separately.
  void collect_state(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".running_mean"] = running_mean;
    out[prefix + ".running_var"] = running_var;
  }

  Tensor gamma, beta;
  Tensor running_mean, running_var;

 private:
  double momentum_ = 0.1, eps_ = 1e-5;
};

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Forward-direction carry state, one (h, c) pair per layer, each (batch, hidden).
struct LstmState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
  bool empty() const { return h.empty(); }
};

// Multi-layer, optionally bidirectional LSTM over a (time, batch, feature)
// sequence. Gate layout within the stacked 4H dimension is [input, forget,
// cell, output]. When an initial state is supplied it seeds the forward
// direction of each layer; the backward direction always starts from zeros, so
// cross-segment state threading is well defined for bidirectional stacks too.
class Lstm {
 public:
  Lstm() = default;
  Lstm(int input_size, int hidden_size, int num_layers, bool bidirectional, Rng& rng)
      : input_(input_size), hidden_(hidden_size), layers_(num_layers), bidir_(bidirectional) {
    int dirs = bidir_ ? 2 : 1;
    for (int l = 0; l < layers_; ++l) {
      int in = l == 0 ? input_ : hidden_ * dirs;
      fw_.push_back(make_direction(in, rng));
      if (bidir_) bw_.push_back(make_direction(in, rng));
    }
  }

  // x: (T, batch, input) -> (T, batch, hidden*dirs). final_state, when
  // requested, receives the forward-direction (h, c) of each layer at the last
  // step.
  Tensor forward(const Tensor& x, const LstmState* initial = nullptr,
                 LstmState* final_state = nullptr) const {
    if (x.rank() != 3 || x.dim(2) != input_)
      throw DimensionError("lstm: input " + shape_str(x.shape()) + " does not match input width " +
                           std::to_string(input_));
    if (initial && !initial->empty() && static_cast<int>(initial->h.size()) != layers_)
      throw DimensionError("lstm: initial state has " + std::to_string(initial->h.size()) +
                           " layers, expected " + std::to_string(layers_));
    int t_len = x.dim(0), batch = x.dim(1);
    if (final_state) {
      final_state->h.clear();
      final_state->c.clear();
    }

    Tensor layer_in = x;
    for (int l = 0; l < layers_; ++l) {
      Tensor h0, c0;
      if (initial && !initial->empty()) {
        h0 = initial->h[static_cast<std::size_t>(l)];
        c0 = initial->c[static_cast<std::size_t>(l)];
        if (h0.dim(0) != batch || h0.dim(1) != hidden_)
          throw DimensionError("lstm: initial state " + shape_str(h0.shape()) +
                               " does not match (batch, hidden) = (" + std::to_string(batch) +
                               ", " + std::to_string(hidden_) + ")");
      } else {
        h0 = Tensor::zeros({batch, hidden_});
        c0 = Tensor::zeros({batch, hidden_});
      }

      std::vector<Tensor> fw_seq(static_cast<std::size_t>(t_len));
      Tensor h = h0, c = c0;
      for (int t = 0; t < t_len; ++t) {
        step(fw_[static_cast<std::size_t>(l)], time_step(layer_in, t), h, c);
        fw_seq[static_cast<std::size_t>(t)] = h;
      }
      if (final_state) {
        final_state->h.push_back(h);
        final_state->c.push_back(c);
      }

      if (bidir_) {
        std::vector<Tensor> bw_seq(static_cast<std::size_t>(t_len));
        Tensor hb = Tensor::zeros({batch, hidden_});
        Tensor cb = Tensor::zeros({batch, hidden_});
        for (int t = t_len - 1; t >= 0; --t) {
          step(bw_[static_cast<std::size_t>(l)], time_step(layer_in, t), hb, cb);
          bw_seq[static_cast<std::size_t>(t)] = hb;
        }
        std::vector<Tensor> both(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t)
          both[static_cast<std::size_t>(t)] =
              concat({fw_seq[static_cast<std::size_t>(t)], bw_seq[static_cast<std::size_t>(t)]}, 1);
        layer_in = stack0(both);
      } else {
        layer_in = stack0(fw_seq);
      }
    }
    return layer_in;
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    for (int l = 0; l < layers_; ++l) {
      collect_direction(fw_[static_cast<std::size_t>(l)], prefix + ".l" + std::to_string(l) + ".fw", out);
      if (bidir_)
        collect_direction(bw_[static_cast<std::size_t>(l)], prefix + ".l" + std::to_string(l) + ".bw", out);
    }
  }

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }
  int num_layers() const { return layers_; }
  bool bidirectional() const { return bidir_; }
  int output_size() const { return hidden_ * (bidir_ ? 2 : 1); }

  LstmState zero_state(int batch) const {
    LstmState s;
    for (int l = 0; l < layers_; ++l) {
      s.h.push_back(Tensor::zeros({batch, hidden_}));
      s.c.push_back(Tensor::zeros({batch, hidden_}));
    }
    return s;
  }

  struct Direction {
    Tensor w_ih;  // (4H, in)
    Tensor w_hh;  // (4H, H)
    Tensor b_ih;  // (4H)
    Tensor b_hh;  // (4H)
  };

  std::vector<Direction> fw_, bw_;  // per layer

 private:
  Direction make_direction(int in, Rng& rng) const {
    Direction d;
    d.w_ih = glorot_uniform({4 * hidden_, in}, in, hidden_, rng);
    d.w_hh = glorot_uniform({4 * hidden_, hidden_}, hidden_, hidden_, rng);
    d.b_ih = Tensor::zeros({4 * hidden_}, true);
    d.b_hh = Tensor::zeros({4 * hidden_}, true);
    // Forget-gate bias starts at 1 so early training does not erase the cell.
    for (int i = hidden_; i < 2 * hidden_; ++i) d.b_ih.data()[i] = 1.0;
    return d;
  }

  // One cell update: h, c are replaced by the next step's values.
  void step(const Direction& d, const Tensor& x_t, Tensor& h, Tensor& c) const {
    Tensor gates = add_rowbias(add_rowbias(
        add(matmul(x_t, transpose(d.w_ih)), matmul(h, transpose(d.w_hh))), d.b_ih), d.b_hh);
    Tensor i = sigmoid(slice(gates, 1, 0, hidden_));
    Tensor f = sigmoid(slice(gates, 1, hidden_, hidden_));
    Tensor g = tanh_op(slice(gates, 1, 2 * hidden_, hidden_));
    Tensor o = sigmoid(slice(gates, 1, 3 * hidden_, hidden_));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_op(c));
  }

  void collect_direction(const Direction& d, const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w_ih"] = d.w_ih;
    out[prefix + ".w_hh"] = d.w_hh;
    out[prefix + ".b_ih"] = d.b_ih;
    out[prefix + ".b_hh"] = d.b_hh;
  }

  int input_ = 0, hidden_ = 0, layers_ = 0;
  bool bidir_ = false;
};

}  // namespace vio
