#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vio/errors.hpp"
#include "vio/rng.hpp"

namespace vio {

using Shape = std::vector<int>;

inline int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {

// One node of the computation tape. Ops that participate in a backward pass
// keep their inputs alive through `parents` and record a closure that pushes
// the output gradient to them.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool graph_consumed = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;
  const char* op = "";

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void accumulate(const std::vector<double>& g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

}  // namespace detail

struct BackwardStats {
  std::size_t ops_replayed = 0;  // recorded operations visited, each exactly once
  std::size_t nodes_visited = 0;
};

// Dense double-precision tensor with optional participation in a reverse-mode
// computation tape. Handles share state: copying a Tensor aliases its buffer.
// Values are treated as immutable once created; only optimizers write through
// data() in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), {}, requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t = make(std::move(shape), {}, requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (static_cast<int>(data.size()) != shape_numel(shape))
      throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }
  static Tensor scalar(double v) { return from_data({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int size() const { return static_cast<int>(node_->data.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  double* data() { return node_->data.data(); }
  const double* data() const { return node_->data.data(); }
  const std::vector<double>& values() const { return node_->data; }
  double value() const {
    if (size() != 1) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }
  const std::vector<double>& grad() const {
    if (!has_grad())
      throw ContractError("grad(): no gradient present (did backward() run?)");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  // Value-only copy that shares nothing with the tape.
  Tensor detach() const {
    return from_data(node_->shape, node_->data, false);
  }

  // Reverse pass from a scalar root. Replays every recorded operation exactly
  // once in reverse topological order, then frees the tape: a second call on
  // the same graph throws.
  BackwardStats backward() {
    if (!defined() || size() != 1)
      throw ContractError("backward(): root must be a defined scalar");
    // A root outside the tape (no upstream tensor requires gradients) has
    // nothing to replay; report zero work rather than failing, so forward-only
    // evaluation can share code with training paths.
    if (!node_->requires_grad) return BackwardStats{};
    if (node_->graph_consumed)
      throw ContractError("backward(): computation tape already consumed");

    // Iterative post-order over parents = forward tape order.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    struct Frame {
      detail::TensorNode* n;
      std::size_t next_parent;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.n->parents.size()) {
        detail::TensorNode* p = f.n->parents[f.next_parent++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }

    node_->ensure_grad();
    node_->grad[0] = 1.0;

    BackwardStats stats;
    stats.nodes_visited = order.size();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) {
        (*it)->backward_fn();
        ++stats.ops_replayed;
      }
    }
    for (detail::TensorNode* n : order) {
      n->parents.clear();
      n->backward_fn = nullptr;
      n->graph_consumed = true;
    }
    return stats;
  }

  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> shared_node() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  static Tensor make(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    int n = shape_numel(shape);
    t.node_->shape = std::move(shape);
    if (data.empty())
      t.node_->data.assign(static_cast<std::size_t>(n), 0.0);
    else
      t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline Tensor make_op_output(Shape shape, std::vector<double> data, const char* op,
                             std::vector<Tensor> inputs,
                             std::function<void()> (*bind)(TensorNode*, void*) = nullptr,
                             void* = nullptr) {
  (void)bind;
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
  bool taped = false;
  for (const Tensor& t : inputs) taped = taped || t.requires_grad();
  if (taped) {
    out.node()->requires_grad = true;
    out.node()->op = op;
    for (const Tensor& t : inputs) out.node()->parents.push_back(t.shared_node());
  }
  return out;
}

// Attach a backward closure to `out` if any input was taped.
inline void attach_backward(Tensor& out, std::function<void()> fn) {
  if (out.requires_grad()) out.node()->backward_fn = std::move(fn);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural primitives
// ---------------------------------------------------------------------------

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> d(a.values());
  for (int i = 0; i < b.size(); ++i) d[static_cast<std::size_t>(i)] += b.data()[i];
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "add", {a, b});
  auto* an = a.node();
  auto* bn = b.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, bn, on] {
    if (an->requires_grad) an->accumulate(on->grad);
    if (bn->requires_grad) bn->accumulate(on->grad);
  });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> d(a.values());
  for (int i = 0; i < b.size(); ++i) d[static_cast<std::size_t>(i)] -= b.data()[i];
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "sub", {a, b});
  auto* an = a.node();
  auto* bn = b.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, bn, on] {
    if (an->requires_grad) an->accumulate(on->grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    }
  });
  return out;
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) d[static_cast<std::size_t>(i)] = a.data()[i] * b.data()[i];
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "mul", {a, b});
  auto* an = a.node();
  auto* bn = b.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
    }
  });
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) d[static_cast<std::size_t>(i)] = a.data()[i] * c;
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "scale", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on, c] {
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
  });
  return out;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor relu(const Tensor& a) {
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) d[static_cast<std::size_t>(i)] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "relu", {a});
  auto* an = a.node();
  auto* on = out.node();
  // Subgradient at exactly 0 is defined as 0.
  detail::attach_backward(out, [an, on] {
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i)
      if (an->data[i] > 0.0) an->grad[i] += on->grad[i];
  });
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) {
    double x = a.data()[i];
    d[static_cast<std::size_t>(i)] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                              : std::exp(x) / (1.0 + std::exp(x));
  }
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "sigmoid", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on] {
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      double y = on->data[i];
      an->grad[i] += on->grad[i] * y * (1.0 - y);
    }
  });
  return out;
}

inline Tensor tanh_op(const Tensor& a) {
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) d[static_cast<std::size_t>(i)] = std::tanh(a.data()[i]);
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "tanh", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on] {
    an->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      double y = on->data[i];
      an->grad[i] += on->grad[i] * (1.0 - y * y);
    }
  });
  return out;
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a.data()[i];
  Tensor out = detail::make_op_output({1}, {s}, "sum", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on] {
    an->ensure_grad();
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[0];
  });
  return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.size()); }

inline Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  return mean(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> d(static_cast<std::size_t>(m) * n, 0.0);
  const double* ad = a.data();
  const double* bd = b.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd + p * n;
      double* drow = d.data() + i * n;
      for (int j = 0; j < n; ++j) drow[j] += av * brow[j];
    }
  Tensor out = detail::make_op_output({m, n}, std::move(d), "matmul", {a, b});
  auto* an = a.node();
  auto* bn = b.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, bn, on, m, k, n] {
    if (an->requires_grad) {
      an->ensure_grad();
      // dA = dOut * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += on->grad[static_cast<std::size_t>(i) * n + j] * bn->data[static_cast<std::size_t>(p) * n + j];
          an->grad[static_cast<std::size_t>(i) * k + p] += s;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB = A^T * dOut
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += an->data[static_cast<std::size_t>(i) * k + p] * on->grad[static_cast<std::size_t>(i) * n + j];
          bn->grad[static_cast<std::size_t>(p) * n + j] += s;
        }
    }
  });
  return out;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw DimensionError("transpose: expects rank-2 operand, got " + shape_str(a.shape()));
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> d(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) d[static_cast<std::size_t>(j) * m + i] = a.data()[i * n + j];
  Tensor out = detail::make_op_output({n, m}, std::move(d), "transpose", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on, m, n] {
    an->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        an->grad[static_cast<std::size_t>(i) * n + j] += on->grad[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

// (rows, cols) + (cols): bias broadcast over rows.
inline Tensor add_rowbias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    throw DimensionError("add_rowbias: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
  int r = x.dim(0), c = x.dim(1);
  std::vector<double> d(x.values());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) d[static_cast<std::size_t>(i) * c + j] += b.data()[j];
  Tensor out = detail::make_op_output(x.shape(), std::move(d), "add_rowbias", {x, b});
  auto* xn = x.node();
  auto* bn = b.node();
  auto* on = out.node();
  detail::attach_backward(out, [xn, bn, on, r, c] {
    if (xn->requires_grad) xn->accumulate(on->grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) bn->grad[static_cast<std::size_t>(j)] += on->grad[static_cast<std::size_t>(i) * c + j];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
  Tensor out = detail::make_op_output(std::move(new_shape), a.values(), "reshape", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on] { an->accumulate(on->grad); });
  return out;
}

namespace detail {
inline void axis_strides(const Shape& s, int axis, int& outer, int& len, int& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  len = s[static_cast<std::size_t>(axis)];
  inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

inline Tensor slice(const Tensor& a, int axis, int start, int len) {
  if (axis < 0 || axis >= a.rank())
    throw DimensionError("slice: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(a.shape()));
  if (start < 0 || len < 0 || start + len > a.dim(axis))
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") exceeds axis " + std::to_string(axis) +
                         " of " + shape_str(a.shape()));
  int outer, alen, inner;
  detail::axis_strides(a.shape(), axis, outer, alen, inner);
  Shape os = a.shape();
  os[static_cast<std::size_t>(axis)] = len;
  std::vector<double> d(static_cast<std::size_t>(outer) * len * inner);
  for (int o = 0; o < outer; ++o)
    for (int l = 0; l < len; ++l)
      std::copy_n(a.data() + (static_cast<std::size_t>(o) * alen + start + l) * inner, inner,
                  d.data() + (static_cast<std::size_t>(o) * len + l) * inner);
  Tensor out = detail::make_op_output(std::move(os), std::move(d), "slice", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on, outer, alen, inner, start, len] {
    an->ensure_grad();
    for (int o = 0; o < outer; ++o)
      for (int l = 0; l < len; ++l) {
        const double* src = on->grad.data() + (static_cast<std::size_t>(o) * len + l) * inner;
        double* dst = an->grad.data() + (static_cast<std::size_t>(o) * alen + start + l) * inner;
        for (int i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for " + shape_str(s0));
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(s0.size()))
      throw DimensionError("concat: rank mismatch: " + shape_str(s0) + " vs " + shape_str(p.shape()));
    for (int i = 0; i < p.rank(); ++i)
      if (i != axis && p.dim(i) != s0[static_cast<std::size_t>(i)])
        throw DimensionError("concat: shapes disagree off-axis: " + shape_str(s0) + " vs " +
                             shape_str(p.shape()));
    total += p.dim(axis);
  }
  Shape os = s0;
  os[static_cast<std::size_t>(axis)] = total;
  int outer, _len, inner;
  detail::axis_strides(os, axis, outer, _len, inner);
  (void)_len;
  std::vector<double> d(static_cast<std::size_t>(shape_numel(os)));
  int offset = 0;
  for (const Tensor& p : parts) {
    int plen = p.dim(axis);
    for (int o = 0; o < outer; ++o)
      std::copy_n(p.data() + static_cast<std::size_t>(o) * plen * inner,
                  static_cast<std::size_t>(plen) * inner,
                  d.data() + (static_cast<std::size_t>(o) * total + offset) * inner);
    offset += plen;
  }
  Tensor out = detail::make_op_output(std::move(os), std::move(d), "concat", parts);
  auto* on = out.node();
  std::vector<detail::TensorNode*> pn;
  std::vector<int> plens;
  for (const Tensor& p : parts) {
    pn.push_back(p.node());
    plens.push_back(p.dim(axis));
  }
  detail::attach_backward(out, [on, pn, plens, outer, inner, total] {
    int offset = 0;
    for (std::size_t pi = 0; pi < pn.size(); ++pi) {
      int plen = plens[pi];
      if (pn[pi]->requires_grad) {
        pn[pi]->ensure_grad();
        for (int o = 0; o < outer; ++o) {
          const double* src = on->grad.data() + (static_cast<std::size_t>(o) * total + offset) * inner;
          double* dst = pn[pi]->grad.data() + static_cast<std::size_t>(o) * plen * inner;
          for (int i = 0; i < plen * inner; ++i) dst[i] += src[i];
        }
      }
      offset += plen;
    }
  });
  return out;
}

// (T,B,F) -> (B,F) at step t.
inline Tensor time_step(const Tensor& seq, int t) {
  Tensor s = slice(seq, 0, t, 1);
  Shape sh(seq.shape().begin() + 1, seq.shape().end());
  return reshape(s, sh);
}

// Stack rank-k tensors into rank-(k+1) along a new leading axis.
inline Tensor stack0(const std::vector<Tensor>& parts) {
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, 0);
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Numerically stabilized by max-subtraction; rows along `axis` sum to 1.
inline Tensor softmax(const Tensor& a, int axis) {
  if (axis < 0 || axis >= a.rank())
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(a.shape()));
  int outer, len, inner;
  detail::axis_strides(a.shape(), axis, outer, len, inner);
  std::vector<double> d(static_cast<std::size_t>(a.size()));
  for (int o = 0; o < outer; ++o)
    for (int i = 0; i < inner; ++i) {
      auto idx = [&](int l) { return (static_cast<std::size_t>(o) * len + l) * inner + i; };
      double mx = a.data()[idx(0)];
      for (int l = 1; l < len; ++l) mx = std::max(mx, a.data()[idx(l)]);
      double z = 0.0;
      for (int l = 0; l < len; ++l) {
        double e = std::exp(a.data()[idx(l)] - mx);
        d[idx(l)] = e;
        z += e;
      }
      for (int l = 0; l < len; ++l) d[idx(l)] /= z;
    }
  Tensor out = detail::make_op_output(a.shape(), std::move(d), "softmax", {a});
  auto* an = a.node();
  auto* on = out.node();
  detail::attach_backward(out, [an, on, outer, len, inner] {
    an->ensure_grad();
    for (int o = 0; o < outer; ++o)
      for (int i = 0; i < inner; ++i) {
        auto idx = [&](int l) { return (static_cast<std::size_t>(o) * len + l) * inner + i; };
        double dot = 0.0;
        for (int l = 0; l < len; ++l) dot += on->grad[idx(l)] * on->data[idx(l)];
        for (int l = 0; l < len; ++l)
          an->grad[idx(l)] += on->data[idx(l)] * (on->grad[idx(l)] - dot);
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// x: (Cin,H,W), w: (Cout,Cin,kh,kw), bias: (Cout) or undefined. Zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4)
    throw DimensionError("conv2d: expects x (C,H,W) and w (Cout,Cin,kh,kw), got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin)
    throw DimensionError("conv2d: input channels disagree: " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1)
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " too large for input " +
                         shape_str(x.shape()));

  std::vector<double> d(static_cast<std::size_t>(cout) * ho * wo, 0.0);
  const double* xd = x.data();
  const double* wdp = w.data();
  for (int oc = 0; oc < cout; ++oc) {
    double b = bias.defined() ? bias.data()[oc] : 0.0;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double s = b;
        int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
        for (int ic = 0; ic < cin; ++ic)
          for (int ky = 0; ky < kh; ++ky) {
            int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int ix = ix0 + kx;
              if (ix < 0 || ix >= wd) continue;
              s += xd[(static_cast<std::size_t>(ic) * h + iy) * wd + ix] *
                   wdp[((static_cast<std::size_t>(oc) * cin + ic) * kh + ky) * kw + kx];
            }
          }
        d[(static_cast<std::size_t>(oc) * ho + oy) * wo + ox] = s;
      }
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  Tensor out = detail::make_op_output({cout, ho, wo}, std::move(d), "conv2d", inputs);
  auto* xn = x.node();
  auto* wn = w.node();
  auto* bn = bias.defined() ? bias.node() : nullptr;
  auto* on = out.node();
  detail::attach_backward(out, [xn, wn, bn, on, cin, h, wd, cout, kh, kw, ho, wo, stride, pad] {
    if (xn->requires_grad) xn->ensure_grad();
    if (wn->requires_grad) wn->ensure_grad();
    if (bn && bn->requires_grad) bn->ensure_grad();
    for (int oc = 0; oc < cout; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double g = on->grad[(static_cast<std::size_t>(oc) * ho + oy) * wo + ox];
          if (g == 0.0) continue;
          if (bn && bn->requires_grad) bn->grad[static_cast<std::size_t>(oc)] += g;
          int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
          for (int ic = 0; ic < cin; ++ic)
            for (int ky = 0; ky < kh; ++ky) {
              int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ix0 + kx;
                if (ix < 0 || ix >= wd) continue;
                std::size_t xi = (static_cast<std::size_t>(ic) * h + iy) * wd + ix;
                std::size_t wi = ((static_cast<std::size_t>(oc) * cin + ic) * kh + ky) * kw + kx;
                if (xn->requires_grad) xn->grad[xi] += g * wn->data[wi];
                if (wn->requires_grad) wn->grad[wi] += g * xn->data[xi];
              }
            }
        }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Regularization ops
// ---------------------------------------------------------------------------

// Inverted dropout: in training mode, zeroes entries with probability p and
// scales survivors by 1/(1-p). Identity (same tensor) in eval mode.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  double keep = 1.0 - p;
  for (auto& m : mask) m = rng.uniform(0.0, 1.0) < keep ? 1.0 / keep : 0.0;
  std::vector<double> d(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i) d[static_cast<std::size_t>(i)] = x.data()[i] * mask[static_cast<std::size_t>(i)];
  Tensor out = detail::make_op_output(x.shape(), std::move(d), "dropout", {x});
  auto* xn = x.node();
  auto* on = out.node();
  auto m = std::make_shared<std::vector<double>>(std::move(mask));
  detail::attach_backward(out, [xn, on, m] {
    xn->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * (*m)[i];
  });
  return out;
}

// Wraps each entry to (-pi, pi]. Piecewise translation, so the gradient passes
// through unchanged.
inline Tensor wrap_angles(const Tensor& x) {
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> d(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i) {
    double w = std::remainder(x.data()[i], 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    d[static_cast<std::size_t>(i)] = w;
  }
  Tensor out = detail::make_op_output(x.shape(), std::move(d), "wrap_angles", {x});
  auto* xn = x.node();
  auto* on = out.node();
  detail::attach_backward(out, [xn, on] { xn->accumulate(on->grad); });
  return out;
}

}  // namespace vio
