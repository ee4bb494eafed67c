#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "slw/errors.hpp"
#include "slw/tensor/dense.hpp"

namespace slw {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  Graph<Scalar>* graph_ptr() const { return graph_; }
  const MatrixX<Scalar>& value() const { return graph_->value(id_); }
  const MatrixX<Scalar>& grad() const { return graph_->grad(id_); }
  bool requires_grad() const { return graph_->requires_grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operation records in creation order, which is a topological order.
/// backward() walks it once in reverse.
template <typename Scalar>
class Graph {
 public:
  using Mat = MatrixX<Scalar>;
  /// Receives the graph and the id of the node whose gradient is being propagated.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> leaf(Mat value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), Mat(), requires_grad, false, {}});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> constant(Mat value) { return leaf(std::move(value), false); }
  Var<Scalar> parameter(Mat value) { return leaf(std::move(value), true); }

  /// Appends an operation result. The backward rule is kept only when some input needs a gradient.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.graph_ptr() != this) throw ContractError("graph: input belongs to a different graph");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Mat(), needs, false, needs ? std::move(backward) : BackwardFn{}});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  const Mat& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() target with respect to this node (zeros if unreached).
  const Mat& grad(std::size_t id) { return grad_buffer(id); }

  /// Adds `delta` into the gradient buffer of `id` (allocating it on first use).
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = delta;
      n.has_grad = true;
    } else {
      n.grad += delta;
    }
  }

  /// Mutable gradient buffer, zero-initialised on first access. For kernels that scatter into it.
  Mat& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  bool wants_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Reverse-mode sweep from a scalar node. Previous gradients are discarded, so
  /// calling this twice yields identical results.
  void backward(Var<Scalar> loss) {
    const Node& target = nodes_.at(loss.id());
    if (target.value.rows() != 1 || target.value.cols() != 1) {
      throw ContractError("backward: loss must be a 1x1 scalar, got " + shape_string(target.value));
    }
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad.resize(0, 0);
    }
    grad_buffer(loss.id())(0, 0) = Scalar(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad;
    bool has_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace slw
