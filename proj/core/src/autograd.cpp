#include "fgd/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace fgd {

template <typename T>
const Tensor<T>& GradMap<T>::of(const Var<T>& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for node " + std::to_string(leaf.id()));
  return it->second;
}

template <typename T>
void Tape<T>::check_open() const {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  check_open();
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  n.is_leaf = true;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward) {
  const std::size_t next = nodes_.size();
  bool needs = false;
  bool inputs_finite = true;
  for (auto p : parents) {
    if (p >= next) throw std::logic_error("tape cycle: parent " + std::to_string(p) + " does not precede node");
    needs = needs || nodes_[p].requires_grad;
#ifndef NDEBUG
    inputs_finite = inputs_finite && nodes_[p].value.all_finite();
#endif
  }
#ifndef NDEBUG
  if (inputs_finite && !value.all_finite()) {
    throw NumericError("non-finite output recorded at node " + std::to_string(next));
  }
#else
  (void)inputs_finite;
#endif
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(std::size_t id, const Tensor<T>& g) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (g.size() != n.value.size()) {
    throw std::logic_error("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                           to_string(n.value.shape()));
  }
  Tensor<T>& buf = grad_buffer(id);
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
GradMap<T> Tape<T>::backward(const Var<T>& loss) {
  check_open();
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  consumed_ = true;
  GradMap<T> out;
  if (!nodes_[loss.id()].requires_grad) return out;

  grad_buffer(loss.id()).fill(T{1});
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.is_leaf) {
      if (n.param != nullptr) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
      out.grads_.emplace(i, std::move(n.grad));
      continue;
    }
    n.backward(*this, n.grad);
    n.grad = Tensor<T>();
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template class GradMap<float>;
template class GradMap<double>;

}  // namespace fgd
