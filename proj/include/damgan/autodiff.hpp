#pragma once

#include "damgan/tensor.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace damgan::ad {

template <typename Scalar>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  /// Scalar value of a single-element node.
  Scalar item() const { return value()[0]; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of a computation for reverse-mode differentiation.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value);
  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = true);

  /// Records an op output. `requires_grad` is inherited from `inputs`; the
  /// backward closure is dropped when no input needs a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<std::size_t> inputs,
                     Backward backward);

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_[id]->value; }
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first access.
  Tensor<Scalar>& grad(std::size_t id);
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor<Scalar> gradient(const Var<Scalar>& v) const;

  /// Seeds d(root)/d(root) = 1 and propagates to every node that requires it.
  void backward(const Var<Scalar>& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

struct ConvOptions {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
};

/// 2-D cross-correlation, weight [out, in, k, k], optional bias [1, out, 1, 1].
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                   const std::optional<Var<Scalar>>& bias, const ConvOptions& opt);

/// Dense layer on the flattened item, weight [out, c*h*w, 1, 1], bias [1, out, 1, 1].
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);

/// Per-item, per-channel normalization over the spatial extent; no affine.
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5));

template <typename Scalar>
Var<Scalar> upsample_nearest(const Var<Scalar>& x, Index factor = 2);

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s);

/// features [n, c, h, w] times a single-channel map [n, 1, h, w] broadcast over c.
template <typename Scalar>
Var<Scalar> mul_channel_broadcast(const Var<Scalar>& features, const Var<Scalar>& map);

/// mean |a - b| over all elements, as a [1,1,1,1] node.
template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b);

/// -mean log(clamp(x)), clamp to [eps, 1 - eps].
template <typename Scalar>
Var<Scalar> neg_mean_log(const Var<Scalar>& x, Scalar eps);

/// -mean log(1 - clamp(x)), clamp to [eps, 1 - eps].
template <typename Scalar>
Var<Scalar> neg_mean_log1m(const Var<Scalar>& x, Scalar eps);

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& x) { return scale(x, s); }

}  // namespace damgan::ad
