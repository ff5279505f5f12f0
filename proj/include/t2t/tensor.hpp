#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "t2t/errors.hpp"

namespace t2t {

using Index = std::int64_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

inline Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  VectorX<Scalar> value;
  VectorX<Scalar> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents. Empty for leaves.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() != value.size()) grad = VectorX<Scalar>::Zero(value.size());
    grad += g;
  }

  Scalar* grad_data() {
    if (grad.size() != value.size()) grad = VectorX<Scalar>::Zero(value.size());
    return grad.data();
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording for the lifetime of the guard (evaluation, decoding).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// parameter tying works (the embedding matrix and the output projection are
/// literally the same node). Values are immutable once an op has consumed
/// them, except for parameters updated between steps by an optimizer.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;
  using NodeType = detail::Node<Scalar>;
  using BackwardFn = std::function<void(NodeType&)>;

  Tensor() = default;

  static Tensor from_values(Shape shape, VectorX<Scalar> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<NodeType>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_vector(Shape shape, const std::vector<Scalar>& values,
                            bool requires_grad = false) {
    VectorX<Scalar> v(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Index>(i)] = values[i];
    return from_values(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const Index n = shape_numel(shape);
    return from_values(std::move(shape), VectorX<Scalar>::Zero(n), requires_grad);
  }

  static Tensor full(Shape shape, Scalar value, bool requires_grad = false) {
    const Index n = shape_numel(shape);
    return from_values(std::move(shape), VectorX<Scalar>::Constant(n, value), requires_grad);
  }

  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return full(Shape{}, value, requires_grad);
  }

  /// Builds an op result. Records the graph edge only when grad mode is on and
  /// some parent requires a gradient.
  static Tensor make_result(Shape shape, VectorX<Scalar> values,
                            std::initializer_list<Tensor> parents, BackwardFn backward) {
    return make_result(std::move(shape), std::move(values), std::vector<Tensor>(parents),
                       std::move(backward));
  }

  static Tensor make_result(Shape shape, VectorX<Scalar> values, const std::vector<Tensor>& parents,
                            BackwardFn backward) {
    auto node = std::make_shared<NodeType>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any && detail::grad_mode_flag()) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node_);
      node->backward_fn = std::move(backward);
    }
    return Tensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index dim() const { return static_cast<Index>(node_->shape.size()); }
  Index size(Index axis) const {
    if (axis < 0) axis += dim();
    return node_->shape.at(static_cast<std::size_t>(axis));
  }
  Index numel() const { return node_->value.size(); }

  const VectorX<Scalar>& values() const { return node_->value; }
  VectorX<Scalar>& mutable_values() { return node_->value; }
  Scalar item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_string(shape()) + " is not a scalar");
    return node_->value[0];
  }
  Scalar operator[](Index i) const { return node_->value[i]; }

  /// Row-major matrix view collapsing all leading dimensions into rows.
  ConstMatrixMap<Scalar> matrix() const {
    const Index cols = dim() == 0 ? 1 : shape().back();
    return ConstMatrixMap<Scalar>(node_->value.data(), cols == 0 ? 0 : numel() / cols, cols);
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return node_->is_leaf(); }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && numel() > 0; }
  const VectorX<Scalar>& grad() const { return node_->grad; }
  VectorX<Scalar>& mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad = VectorX<Scalar>::Zero(numel()); }
  void clear_grad() { node_->grad.resize(0); }

  /// Storage identity; equal for tensors that alias the same node.
  const void* storage_id() const { return node_.get(); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Detached copy of the values (new storage, no graph).
  Tensor detach_copy(bool requires_grad = false) const {
    return from_values(shape(), values(), requires_grad);
  }

 private:
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  std::shared_ptr<NodeType> node_;
};

/// Populates gradients over the recorded graph reachable from a scalar loss.
/// Leaf gradients accumulate across calls; intermediate ones are recomputed.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  using NodeType = detail::Node<Scalar>;
  NodeType* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<NodeType*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* node : order) {
    if (!node->is_leaf()) node->grad = VectorX<Scalar>::Zero(node->value.size());
  }
  root->accumulate(VectorX<Scalar>::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (!node->is_leaf()) node->backward_fn(*node);
  }
}

}  // namespace t2t
