#pragma once

// Tape-free reverse-mode autodiff: every Var owns a node that remembers its
// parents and how to push its gradient into them.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hpdc/nn/tensor.hpp"

namespace hpdc::nn {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  /// Scalar value of a 1-element tensor.
  T item() const { return node_->value[0]; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op result; records parents and the backward closure only when a
/// parent needs gradients and recording is enabled.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  Var<T> out(std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (const auto& v : inputs) node.parents.push_back(v.node());
  node.backward = std::move(backward);
  return out;
}

/// Gradient buffer of parent `i` if it participates in differentiation.
template <class T>
Tensor<T>* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p && p->requires_grad ? &p->ensure_grad() : nullptr;
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value());
}

/// Seeds d(root)/d(root) = 1 and propagates through the recorded graph.
template <class T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace hpdc::nn
