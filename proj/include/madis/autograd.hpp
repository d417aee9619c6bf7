#pragma once

#include "madis/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace madis {

/// One node of the dynamically built computation tape. Every op records its
/// parents and a closure that scatters the node's gradient back into them.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  Tensor<T>& grad_buf() {
    if (!grad_ready) {
      grad = Tensor<T>::zeros(value.shape());
      grad_ready = true;
    }
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

/// Creates the output node of an op; requires_grad follows from the parents.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return n;
}

/// Reverse-mode sweep from a scalar root. Iterative topological order; the
/// graphs here can be a few thousand nodes deep through the UNet decoder.
template <typename T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buf().array().setConstant(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->grad_ready) n->backprop();
  }
}

/// Drops accumulated gradients on a set of leaves (parameters) between steps.
template <typename T>
void zero_grad(const Var<T>& v) {
  v->grad_ready = false;
  v->grad = Tensor<T>();
}

template <typename T>
void accumulate(Var<T>& dst, const Tensor<T>& g) {
  dst->grad_buf().array() += g.array();
}

}  // namespace madis
