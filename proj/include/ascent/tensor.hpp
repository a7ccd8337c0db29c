#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ascent/common.hpp"

namespace ascent {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording within a scope (inference / benchmarking).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data once materialized
  bool requires_grad = false;
  bool backward_done = false;  // set on a node used as a backward() root
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pushes this node's grad into the parents' grad buffers.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto node = std::make_shared<TensorNode>();
    node->data.assign(numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(node);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(node);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  double value() const {
    if (size() != 1) throw DimensionError("value() requires a scalar tensor, got " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw Error("tensor has no gradient; run backward() first");
    return node_->grad;
  }
  std::vector<double>& mutable_grad() {
    if (!has_grad()) throw Error("tensor has no gradient; run backward() first");
    return node_->grad;
  }
  void zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
    node_->backward_done = false;
  }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

// Builds an op result node; records parents and the backward rule only when
// grad mode is on and some input requires grad.
inline Tensor make_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backprop = std::move(backprop);
  }
  return Tensor(node);
}

inline void topo_sort(TensorNode* root, std::vector<TensorNode*>& order) {
  // Iterative post-order DFS; each node appears once, parents before children
  // is not required -- we reverse the post-order for the backward sweep.
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Reverse-topological gradient accumulation from a scalar root. Re-running
// backward on the same root without zero_grad() is an error.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward() requires a scalar root, got " + shape_str(loss.shape()));
  }
  TensorNode* root = loss.node().get();
  if (!root->requires_grad) {
    throw Error("backward() root does not require grad; nothing to differentiate");
  }
  if (root->backward_done) {
    throw Error("backward() called twice on the same root without reset");
  }
  root->backward_done = true;

  std::vector<TensorNode*> order;
  detail::topo_sort(root, order);
  for (TensorNode* node : order) node->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

}  // namespace ascent
