#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/rng.hpp"
#include "strucdec/tensor.hpp"

namespace strucdec {

/// A named trainable tensor and its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// execution order, so every node's inputs precede it and a single reverse
/// sweep is a valid backward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Free leaf that receives a gradient; read it back with grad().
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var<T> param(Parameter<T>& p);

  /// Appends an op result. `inputs` decide whether the node needs a gradient;
  /// `fn` is dropped when none of them do. Throws NumericError on NaN/Inf.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn, const char* op);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn, const char* op);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first access.
  Tensor<T>& grad(std::size_t id);
  /// Gradient of a node after backward(); zeros if it was unreachable.
  Tensor<T> grad_of(Var<T> v) const;

  /// Reverse sweep from a scalar loss.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };
  // Deque keeps value() references valid while later ops append nodes.
  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(id);
}

// Differentiable ops. Shapes are NCHW for images and N x D for vectors.

/// Stride-1 convolution with zero "same" padding; weight is O x I x k x k, k odd.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias);

/// 2x2 max pooling, stride 2. Ties route the gradient to the first row-major maximum.
template <typename T>
Var<T> maxpool2x2(Var<T> x);

/// 2x bilinear upsampling, align-corners=false, edge clamped.
template <typename T>
Var<T> upsample_bilinear2x(Var<T> x);

template <typename T>
Var<T> group_norm(Var<T> x, std::size_t groups, Var<T> gamma, Var<T> beta, double eps = 1e-5);

/// x * tanh(softplus(x)).
template <typename T>
Var<T> mish(Var<T> x);

/// x W^T + b with x: N x Din, W: Dout x Din, b: Dout.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

/// Mean binary cross entropy on logits. Targets must lie in [0, 1].
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets);

template <typename T>
Var<T> mse(Var<T> a, Var<T> b);

/// Batch mean of KL(N(mu, exp(logvar)) || N(0, I)).
template <typename T>
Var<T> kl_diag_gaussian(Var<T> mu, Var<T> logvar);

/// mu + exp(logvar / 2) * eps, eps ~ N(0, 1) drawn from `rng`.
template <typename T>
Var<T> reparameterize(Var<T> mu, Var<T> logvar, Rng& rng);

/// out[n,c,h,w] = scale[n,c] * f[n,c,h,w] + shift[n,c]. No normalization.
template <typename T>
Var<T> channel_affine(Var<T> features, Var<T> scale, Var<T> shift);

// Structural plumbing.
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> add_scalar(Var<T> x, T c);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
/// Columns [start, start+width) of an N x D matrix.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t width);
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
/// Repeats a C x H x W map into N x C x H x W.
template <typename T>
Var<T> broadcast_batch(Var<T> x, std::size_t n);

// Non-differentiable helpers on plain tensors.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& logits);
/// N x C x H x W -> N x C channel means.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

}  // namespace strucdec
