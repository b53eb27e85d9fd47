#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto an immutable graph node. Values never
// change after construction (optimizers are the one exception and go through
// mutable_value() on leaves); only gradient buffers are written by backward().

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace floro {

using Index = std::int64_t;
using Shape = std::vector<Index>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Violated precondition of an operation (bad arguments, misuse of the API).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

template <typename S>
struct Node {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  Array grad;  // empty until touched by backward
  bool requires_grad = false;
  bool grad_ready = false;     // leaf holds a gradient from a completed pass
  bool backward_done = false;  // this node was the root of a completed pass
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Array& ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  Tensor() = default;

  static Tensor constant(Shape shape, Array value) { return make(std::move(shape), std::move(value), false); }
  static Tensor parameter(Shape shape, Array value) { return make(std::move(shape), std::move(value), true); }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const Index n = floro::numel(shape);
    return make(std::move(shape), Array::Zero(n), requires_grad);
  }

  static Tensor full(Shape shape, S fill, bool requires_grad = false) {
    const Index n = floro::numel(shape);
    return make(std::move(shape), Array::Constant(n, fill), requires_grad);
  }

  static Tensor from(Shape shape, std::initializer_list<S> values, bool requires_grad = false) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (S v : values) a[i++] = v;
    return make(std::move(shape), std::move(a), requires_grad);
  }

  /// Result node of an operation; parents that do not require grad are dropped.
  static Tensor op_result(Shape shape, Array value, std::vector<Tensor> inputs,
                          std::function<void(detail::Node<S>&)> backward_fn) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    Tensor out = make(std::move(shape), std::move(value), false);
    if (any) {
      out.node_->requires_grad = true;
      for (auto& t : inputs) out.node_->parents.push_back(t.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index numel() const { return node_->value.size(); }
  const Array& value() const { return node_->value; }
  S item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }
  S operator[](Index i) const { return node_->value[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  /// Gradient buffer; zeros if the tensor was unreachable from the last loss.
  Array grad() const {
    if (has_grad()) return node_->grad;
    return Array::Zero(numel());
  }

  void zero_grad() {
    node_->grad.resize(0);
    node_->grad_ready = false;
  }

  /// In-place value access for leaves only (optimizer updates, loading).
  Array& mutable_value() {
    if (!node_->parents.empty()) throw ContractError("mutable_value() on a non-leaf tensor");
    return node_->value;
  }

  /// Same data, detached from the graph.
  Tensor detach() const { return constant(shape(), value()); }

  const NodePtr& node() const { return node_; }

 private:
  static Tensor make(Shape shape, Array value, bool requires_grad) {
    if (floro::numel(shape) != value.size())
      throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(value.size()) +
                       " values");
    for (Index d : shape)
      if (d <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  NodePtr node_;
};

/// Runs reverse-mode differentiation from a scalar loss.
///
/// A loss can be differentiated once. Leaves that already hold a gradient
/// from an earlier pass must be reset with zero_grad() first; accumulation
/// across passes is the caller's job.
template <typename S>
void backward(const Tensor<S>& loss) {
  using NodeT = detail::Node<S>;
  if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  NodeT* root = loss.node().get();
  if (root->backward_done) throw ContractError("backward() already ran on this loss");
  if (!root->requires_grad) {
    root->backward_done = true;
    return;
  }

  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order)
    if (n->parents.empty() && n->grad_ready)
      throw ContractError("backward() would accumulate into a gradient that was not reset");

  root->ensure_grad().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
  for (NodeT* n : order)
    if (n->parents.empty()) {
      n->ensure_grad();
      n->grad_ready = true;
    }
  root->backward_done = true;
}

}  // namespace floro
