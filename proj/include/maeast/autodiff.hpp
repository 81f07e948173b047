#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Var pairs a value with an optional graph node. Ops that produce a Var
// register a backward closure capturing exactly the tensors that closure
// needs; everything else is released as soon as the caller drops its
// handles. backward() walks nodes in reverse creation order, which is a
// valid topological order, and frees each closure after running it.

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "maeast/tensor.hpp"

namespace maeast::nn {

template <typename T>
struct Param;

template <typename T>
struct Node;

/// Collects input gradients produced by one node's backward closure.
template <typename T>
class GradSink {
 public:
  explicit GradSink(Node<T>& node) : node_(node) {}
  bool needs(std::size_t input) const;
  void add(std::size_t input, Tensor<T> grad);

 private:
  Node<T>& node_;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

  std::uint64_t id = 0;
  std::string_view op;
  std::vector<std::shared_ptr<Node>> inputs;  // null for inputs without gradient
  BackwardFn backward;
  Tensor<T> grad;
  std::vector<Index> shape;
  Param<T>* param = nullptr;  // set on parameter leaves
};

template <typename T>
class Var {
 public:
  Var() = default;
  /// A constant: participates in ops but receives no gradient.
  Var(Tensor<T> value) : value_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Var(Tensor<T> value, std::shared_ptr<Node<T>> node)
      : value_(std::move(value)), node_(std::move(node)) {}

  const Tensor<T>& value() const { return value_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }
  bool requires_grad() const { return node_ != nullptr; }
  bool defined() const { return value_.defined(); }
  const std::vector<Index>& shape() const { return value_.shape(); }

 private:
  Tensor<T> value_;
  std::shared_ptr<Node<T>> node_;
};

/// A named trainable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;

  /// Handle for use in a graph. Gradients flow into `grad`.
  Var<T> var();
  void zero_grad();

 private:
  std::shared_ptr<Node<T>> leaf_;
};

bool grad_enabled();

/// Disables graph construction for its lifetime (inference, frozen parts).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

std::uint64_t next_node_id();

/// Wraps an op result. Checks the value for NaN/Inf, then attaches a node if
/// gradients are enabled and any input requires them.
template <typename T>
Var<T> make_result(Tensor<T> out, std::string_view op, std::initializer_list<const Var<T>*> inputs,
                   typename Node<T>::BackwardFn backward) {
  ensure_finite(out, op);
  if (!grad_enabled()) return Var<T>(std::move(out));
  bool any = false;
  for (const Var<T>* in : inputs) any = any || in->requires_grad();
  if (!any) return Var<T>(std::move(out));
  auto node = std::make_shared<Node<T>>();
  node->id = next_node_id();
  node->op = op;
  node->shape = out.shape();
  for (const Var<T>* in : inputs) node->inputs.push_back(in->node());
  node->backward = std::move(backward);
  return Var<T>(std::move(out), std::move(node));
}

/// Backpropagates from a single-element root. Consumes the graph.
template <typename T>
void backward(const Var<T>& root);

}  // namespace maeast::nn
