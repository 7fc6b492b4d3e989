#pragma once

#include <deque>
#include <functional>
#include <unordered_map>

#include "fgd/tensor.hpp"

namespace fgd {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of requires-grad leaves, keyed by node id.
template <typename T>
class GradMap {
 public:
  const Tensor<T>& of(const Var<T>& leaf) const;
  bool contains(const Var<T>& leaf) const { return grads_.count(leaf.id()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape<T>;
  std::unordered_map<std::size_t, Tensor<T>> grads_;
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so the
/// recording order is already a topological order of the graph.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes parent gradients
  /// through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is reported by backward().
  Var<T> input(Tensor<T> value);
  /// Leaf bound to a parameter; backward() adds into param.grad.
  Var<T> param(Parameter<T>& p);

  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Adds `g` into the pending gradient of node `id`; no-op for nodes that
  /// do not require gradients.
  void accumulate(std::size_t id, const Tensor<T>& g);
  /// Mutable gradient buffer of node `id`, allocated on first use. Only valid
  /// for nodes that require gradients.
  Tensor<T>& grad_buffer(std::size_t id);

  /// Runs the reverse sweep from a scalar loss. Each node is visited once;
  /// afterwards the tape refuses further recording.
  GradMap<T> backward(const Var<T>& loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Node node);
  void check_open() const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradMap<float>;
extern template class GradMap<double>;

}  // namespace fgd
