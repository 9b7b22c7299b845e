#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
//
// A Tensor is a cheap handle onto a shared graph node. Operations create new
// nodes that remember their parents and a closure which pushes the node's
// gradient into the parents. Leaf nodes that require gradients (parameters)
// accumulate into their grad buffer until zero_grad() is called.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mosq/error.hpp"

namespace mosq::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// While alive, operations on the current thread do not record a graph.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> data(numel_of(shape), T(0));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    std::vector<T> data(numel_of(shape), fill);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{v}, requires_grad);
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    for (auto extent : shape) {
      if (extent == 0) fail(ErrorKind::ShapeMismatch, "zero extent in " + shape_str(shape));
    }
    if (shape.empty() || numel_of(shape) != data.size()) {
      fail(ErrorKind::ShapeMismatch, "shape " + shape_str(shape) + " does not hold " +
                                         std::to_string(data.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  /// Result of an operation. Records the graph only when some parent needs it.
  static Tensor make_result(Shape shape, std::vector<T> data,
                            std::vector<std::shared_ptr<NodeT>> parents,
                            std::function<void(NodeT&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    if (detail::grad_disabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      out.node_->requires_grad = true;
      out.node_->parents = std::move(parents);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) fail(ErrorKind::ShapeMismatch, "item() on " + shape_str(shape()));
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  /// Same values, no history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<NodeT>& node() const { return node_; }

  /// Back-propagates from a single-element tensor into every reachable node.
  void backward() const {
    if (numel() != 1) {
      fail(ErrorKind::NonScalarLoss, "backward() needs a scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    std::vector<std::pair<NodeT*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        NodeT* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeT* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    // Interior buffers are not needed after the sweep; leaves keep theirs.
    for (NodeT* n : order) {
      if (n->backward) std::vector<T>().swap(n->grad);
    }
  }

 private:
  std::shared_ptr<NodeT> node_;
};

}  // namespace mosq::nn
