#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "facemanip/tensor.hpp"

namespace facemanip::nn {

// One node of the dynamically built computation graph. Gradients are
// accumulated (+=) so parameters shared across several graph paths work
// without special casing.
template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_op;

  Tensor<S>& ensure_grad() {
    if (!has_grad) {
      grad = Tensor<S>(value.shape());
      has_grad = true;
    }
    return grad;
  }
};

// Lightweight handle. Copies share the underlying node.
template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  static Var constant(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    return Var(std::move(n));
  }
  static Var param(Tensor<S> t) {
    Var v = constant(std::move(t));
    v.n_->requires_grad = true;
    return v;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<S>& value() const { return n_->value; }
  Tensor<S>& mutable_value() { return n_->value; }
  const Tensor<S>& grad() const { return n_->grad; }
  bool has_grad() const { return n_->has_grad; }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  void zero_grad() {
    n_->has_grad = false;
    n_->grad = Tensor<S>();
  }
  std::shared_ptr<Node<S>> node() const { return n_; }

  // Same value, cut from the graph.
  Var detach() const { return constant(n_->value); }

 private:
  std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <class S>
inline Var<S> make_op(Tensor<S> value, std::vector<std::shared_ptr<Node<S>>> parents,
                      std::function<void(Node<S>&)> backward_op) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_op = std::move(backward_op);
  }
  return Var<S>(std::move(n));
}

}  // namespace detail

// Optional probe used by finite-difference tests: ops with non-smooth points
// (|x|, max(0,x), clamped log) report every element's signed offset from its
// nearest kink, so a probe whose FD interval straddles one can be rejected.
template <class S>
inline thread_local std::vector<S>* kink_trace = nullptr;

template <class S>
inline void trace_kink(S signed_offset_from_kink) {
  if (kink_trace<S>) kink_trace<S>->push_back(signed_offset_from_kink);
}

// Reverse-mode sweep from a scalar root.
template <class S>
void backward(const Var<S>& root) {
  require(root.value().numel() == 1, "backward requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().fill(S(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_op && n->has_grad) n->backward_op(*n);
  }
}

}  // namespace facemanip::nn
