#pragma once

#include <cmath>
#include <vector>

#include "lpvae/core/nn.hpp"

namespace lpvae {

// Adam with bias correction. Betas default to (0.9, 0.999); only the step
// size is expected to vary between experiments.
class Adam {
 public:
  Adam(nn::ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params_.size());
    for (const auto& p : params_) slots_.push_back({Tensor(p.var->value.shape()), Tensor(p.var->value.shape())});
  }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Node& p = *params_[i].var;
      if (p.grad.empty()) continue;
      Tensor& m = slots_[i].m;
      Tensor& v = slots_[i].v;
      m.array() = beta1_ * m.array() + (1.0 - beta1_) * p.grad.array();
      v.array() = beta2_ * v.array() + (1.0 - beta2_) * p.grad.array().square();
      p.value.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  int64_t steps_taken() const { return t_; }

  const nn::ParamList& params() const { return params_; }

  // Optimizer state as named tensors for checkpointing.
  std::vector<std::pair<std::string, Tensor>> state() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("adam.t", Tensor::scalar(static_cast<double>(t_)));
    for (size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("adam.m." + params_[i].name, slots_[i].m);
      out.emplace_back("adam.v." + params_[i].name, slots_[i].v);
    }
    return out;
  }

  void load_state(const std::vector<std::pair<std::string, Tensor>>& entries);

 private:
  struct Slot {
    Tensor m, v;
  };
  nn::ParamList params_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace lpvae
