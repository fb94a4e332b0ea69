#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <vector>

#include "procns/common.hpp"

namespace procns {

namespace detail {

template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parent grads

  int64_t size() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  std::span<T> grad_span() {
    if (grad.empty()) grad.assign(static_cast<size_t>(size()), T(0));
    return grad;
  }
};

}  // namespace detail

// Dynamically shaped dense tensor with reverse-mode autodiff. Ops record a
// tape; backward() on a scalar walks it in reverse topological order.
template <class T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<int> shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(n->size()), v);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    require(static_cast<int64_t>(data.size()) == n->size(),
            "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(n->shape));
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return filled({}, v, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T& at(int64_t i) { return node_->value[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  T item() const {
    require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  std::span<T> grad() { return node_->grad_span(); }
  bool has_grad() const { return !node_->grad.empty(); }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Drops tape history; value is shared, gradient no longer flows.
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = false;
    return Tensor(std::move(n));
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse-mode sweep from a scalar root. Gradients accumulate, so callers
  // zero parameter grads between steps.
  void backward() {
    require(size() == 1, "backward() requires a scalar root");
    std::vector<Node*> order;
    topo_order(order);
    node_->grad_span()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  void topo_order(std::vector<Node*>& order) {
    // Iterative DFS; graphs from deep networks overflow recursion limits.
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

namespace detail {

// Shared helper for op construction: child requires grad if any parent does.
template <class T>
Tensor<T> make_op(std::vector<int> shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  for (auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(n));
}

}  // namespace detail

}  // namespace procns
