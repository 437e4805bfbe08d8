#include "lpvae/core/autodiff.hpp"

#include <unordered_set>

namespace lpvae {

void backward(const Var& root, const Tensor* seed) {
  if (!root->requires_grad) return;
  if (seed == nullptr && root->value.numel() != 1)
    throw ContractError("backward: non-scalar root requires an explicit seed");

  // Iterative post-order DFS over nodes that require grad.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p != nullptr && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  if (seed != nullptr) {
    root->accum_grad(seed->array());
  } else {
    root->accum_grad(ArrayXd::Ones(1));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace lpvae
