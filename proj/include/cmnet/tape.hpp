#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cmnet/tensor.hpp"

namespace cmnet {

using NodeId = int32_t;

enum class PointwiseKind { Sigmoid, Tanh, Relu, Affine, Abs };
enum class BinaryKind { Add, Sub, Mul };
enum class ReduceKind { Sum, Mean };

// Reverse-mode tape over rank-4 tensors. Covers exactly the operations the
// matting network needs. A tape and the tensors it references are confined
// to one logical thread; distinct tapes may run in parallel.
//
// Lifecycle: build ops -> backward(loss) -> read grads. After backward the
// tape accepts no new ops until reset().
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  NodeId leaf(const Tensor<T>& value, bool requires_grad = false);
  // Leaf that never tracks gradients (fixed kernels, masks, targets).
  NodeId constant(const Tensor<T>& value) { return leaf(value, false); }

  const Tensor<T>& value(NodeId id) const { return node_checked(id).value; }
  // Gradient of the last backward() w.r.t. node id; zeros if unreached.
  Tensor<T> grad(NodeId id) const;
  bool has_grad(NodeId id) const;

  void backward(NodeId loss);
  void reset();

  size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }
  bool requires_grad(NodeId id) const { return node_checked(id).requires_grad; }

  // --- operations ---
  NodeId pointwise(NodeId x, PointwiseKind kind, T a = T(1), T b = T(0));
  NodeId binary(NodeId x, NodeId y, BinaryKind kind);
  NodeId concat_channels(std::span<const NodeId> xs);
  NodeId slice_channels(NodeId x, int64_t c0, int64_t c1);
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias, int stride, int pad_h, int pad_w);
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias, int stride, int pad) {
    return conv2d(x, weight, bias, stride, pad, pad);
  }
  NodeId bilinear_resize(NodeId x, int64_t out_h, int64_t out_w, T scale_values = T(1));
  NodeId backwarp(NodeId x, NodeId flow);
  NodeId reflect_pad(NodeId x, int top, int bottom, int left, int right);
  NodeId reduce(NodeId x, ReduceKind kind);
  NodeId l1_against(NodeId x, NodeId y);

  // convenience spellings
  NodeId sigmoid(NodeId x) { return pointwise(x, PointwiseKind::Sigmoid); }
  NodeId tanh_(NodeId x) { return pointwise(x, PointwiseKind::Tanh); }
  NodeId relu(NodeId x) { return pointwise(x, PointwiseKind::Relu); }
  NodeId abs_(NodeId x) { return pointwise(x, PointwiseKind::Abs); }
  NodeId affine(NodeId x, T a, T b) { return pointwise(x, PointwiseKind::Affine, a, b); }
  NodeId scale(NodeId x, T a) { return affine(x, a, T(0)); }
  NodeId one_minus(NodeId x) { return affine(x, T(-1), T(1)); }
  NodeId add(NodeId x, NodeId y) { return binary(x, y, BinaryKind::Add); }
  NodeId sub(NodeId x, NodeId y) { return binary(x, y, BinaryKind::Sub); }
  NodeId mul(NodeId x, NodeId y) { return binary(x, y, BinaryKind::Mul); }
  NodeId sum(NodeId x) { return reduce(x, ReduceKind::Sum); }
  NodeId mean(NodeId x) { return reduce(x, ReduceKind::Mean); }

  // Scalar value of a (1,1,1,1) node.
  T item(NodeId id) const;

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::function<void(Tape&, NodeId)> vjp;  // accumulates into input grads
  };

  const Node& node_checked(NodeId id) const;
  NodeId push(Tensor<T> value, bool requires_grad, std::function<void(Tape&, NodeId)> vjp);
  Tensor<T>& grad_buf(NodeId id);
  void require_open(const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cmnet
