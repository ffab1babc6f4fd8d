#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vio/nn.hpp"

namespace vio {

// Adam with standard bias correction. Operates in place on the parameter
// buffers of a ParamMap; moment state is keyed by parameter name so the same
// optimizer instance survives checkpoint round trips of the parameters.
class Adam {
 public:
  explicit Adam(double lr = 5e-5, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update using each parameter's accumulated gradient, then
  // clears the gradients. Parameters that require grad must have one.
  void step(ParamMap& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      if (!p.has_grad())
        throw ContractError("adam: parameter '" + name +
                            "' has no gradient (missing from the last backward pass)");
      State& s = state_[name];
      if (s.m.size() != static_cast<std::size_t>(p.size())) {
        s.m.assign(static_cast<std::size_t>(p.size()), 0.0);
        s.v.assign(static_cast<std::size_t>(p.size()), 0.0);
      }
      const std::vector<double>& g = p.grad();
      for (int i = 0; i < p.size(); ++i) {
        std::size_t k = static_cast<std::size_t>(i);
        s.m[k] = beta1_ * s.m[k] + (1.0 - beta1_) * g[k];
        s.v[k] = beta2_ * s.v[k] + (1.0 - beta2_) * g[k] * g[k];
        double mhat = s.m[k] / bc1;
        double vhat = s.v[k] / bc2;
        p.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      p.zero_grad();
    }
  }

  void zero_grad(ParamMap& params) {
    for (auto& [name, p] : params) p.zero_grad();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace vio
