#include "strucdec/autodiff.hpp"

namespace strucdec {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn, const char* op) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn), op);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value in forward output");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw Error(std::string(op) + ": input recorded on a different tape");
    needs = needs || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
Tensor<T> Tape<T>::grad_of(Var<T> v) const {
  const auto& node = nodes_[v.id];
  if (node.grad.size() == 0) return Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  grad(loss.id).fill(T(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || node.grad.size() == 0) continue;
    auto& dst = node.param->grad.vec();
    const auto& src = node.grad.vec();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace strucdec
