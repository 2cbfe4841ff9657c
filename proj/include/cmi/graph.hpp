#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmi/tensor.hpp"

namespace cmi {

enum class OpKind {
  Leaf,
  Dense,
  Conv2d,
  Conv2dTranspose,
  BiasAdd,
  Relu,
  LeakyRelu,
  Sigmoid,
  Softmax,
  Exp,
  Log,
  Abs,
  Clamp,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Sum,
  Mean,
  Reshape,
  Concat,
  ChannelScale,
  Upsample,
  Pick,
};

const char* op_name(OpKind kind);

enum class Padding { Same, Valid };

struct ConvOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Same;
};

struct ConvTransposeOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Same;
  /// Target spatial size; 0 selects the default (in*stride for same,
  /// (in-1)*stride+k for valid). Must be a size that conv2d maps back onto
  /// the input size.
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

/// Append-only tape of operations. Ops compute eagerly and record a closure
/// that propagates the output gradient into every input with requires_grad.
///
/// Gradients accumulate into leaves. backward() resets interior gradients
/// before seeding, so running it twice on one graph doubles the leaf grads.
class Graph {
 public:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Layers. Images are channels-last: [batch, h, w, c].
  Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
  Tensor conv2d(const Tensor& x, const Tensor& k, ConvOptions opts = {});
  Tensor conv2d_transpose(const Tensor& x, const Tensor& k, ConvTransposeOptions opts = {});
  /// Adds b[c] along the last dimension.
  Tensor bias_add(const Tensor& x, const Tensor& b);

  // Activations.
  Tensor relu(const Tensor& x);
  Tensor leaky_relu(const Tensor& x, double slope);
  Tensor sigmoid(const Tensor& x);
  /// Row-wise over [batch, classes].
  Tensor softmax(const Tensor& x);

  // Elementwise math.
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor abs(const Tensor& x);
  /// Gradient passes only where lo < x < hi.
  Tensor clamp(const Tensor& x, double lo, double hi);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double factor);
  Tensor add_scalar(const Tensor& x, double value);

  // Reductions to shape [1].
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);

  // Structure.
  Tensor reshape(const Tensor& x, Shape shape);
  /// Concatenates along the last dimension; leading dimensions must agree.
  Tensor concat(std::span<const Tensor> parts);
  /// x[b,h,w,c] * ratio[b,h,w,1], broadcast over channels.
  Tensor channel_scale(const Tensor& x, const Tensor& ratio);
  /// Nearest-neighbour resize of [b,h,w,c] to [b,out_h,out_w,c].
  Tensor upsample_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w);
  /// out[i] = x[i, index[i]] for x of shape [batch, n].
  Tensor pick(const Tensor& x, std::span<const std::size_t> index);

  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  /// Id of the first node whose output holds NaN or Inf.
  std::optional<std::size_t> first_non_finite() const;
  void clear();

 private:
  std::size_t id_of(const Tensor& t);
  Tensor record(OpKind kind, std::initializer_list<const Tensor*> inputs, Tensor out, std::function<void()> bw);
  Tensor record(OpKind kind, const std::vector<const Tensor*>& inputs, Tensor out, std::function<void()> bw);

  std::vector<Node> nodes_;
  std::unordered_map<const TensorImpl*, std::size_t> ids_;
};

}  // namespace cmi
