#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "lpvae/core/tensor.hpp"

namespace lpvae {

// Reverse-mode autodiff over Tensors. Ops build a dynamic graph of Nodes;
// backward() topologically sorts the subgraph that requires gradients and
// runs each node's pullback. Parent links only, so shared_ptr ownership is
// acyclic.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated by accum_grad
  bool requires_grad = false;
  std::vector<Var> parents;
  // Pullback: reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  explicit Node(Tensor v) : value(std::move(v)) {}

  void accum_grad(const ArrayXd& g) {
    if (grad.empty()) grad = Tensor(value.shape());
    grad.array() += g;
  }
  void zero_grad() { grad = Tensor(); }
};

inline Var make_var(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>(std::move(value));
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor value) { return make_var(std::move(value), false); }
inline Var constant(double v) { return make_var(Tensor::scalar(v), false); }

// Thread-local switch: when disabled, ops compute values but record no graph.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool v) { flag() = v; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Helper for op implementations: wires parents/backward only when the result
// participates in a gradient computation.
inline Var attach(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  bool need = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        need = true;
        break;
      }
  }
  Var out = make_var(std::move(value), need);
  if (need) {
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward_fn);
  }
  return out;
}

// Runs reverse-mode accumulation from `root`, seeding d(root)/d(root) = 1.
// The root must be scalar unless `seed` is supplied.
void backward(const Var& root, const Tensor* seed = nullptr);

}  // namespace lpvae
