#include "cmi/graph.hpp"

#include <algorithm>
#include <cmath>

#include "cmi/errors.hpp"
#include "kernels.hpp"

namespace cmi {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Dense: return "dense";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Conv2dTranspose: return "conv2d_transpose";
    case OpKind::BiasAdd: return "bias_add";
    case OpKind::Relu: return "relu";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Abs: return "abs";
    case OpKind::Clamp: return "clamp";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Reshape: return "reshape";
    case OpKind::Concat: return "concat";
    case OpKind::ChannelScale: return "channel_scale";
    case OpKind::Upsample: return "upsample_nearest";
    case OpKind::Pick: return "pick";
  }
  return "unknown";
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Spatial plan of a convolution over an input of size in.
struct Axis {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

Axis plan_axis(std::size_t in, std::size_t k, std::size_t stride, Padding padding, const char* op) {
  if (stride < 1) throw ContractError(std::string(op) + ": stride must be >= 1");
  Axis a;
  if (padding == Padding::Same) {
    a.out = (in + stride - 1) / stride;
    const std::size_t needed = (a.out - 1) * stride + k;
    const std::size_t total = needed > in ? needed - in : 0;
    a.pad_before = total / 2;  // odd remainder goes to the bottom/right
  } else {
    if (k > in)
      throw DimensionError(std::string(op) + ": kernel extent " + std::to_string(k) +
                           " exceeds padded input extent " + std::to_string(in));
    a.out = (in - k) / stride + 1;
  }
  return a;
}

kernels::ConvGeometry conv_geometry(const Shape& x, const Shape& k, std::size_t stride, Padding padding,
                                    const char* op) {
  kernels::ConvGeometry g;
  g.batch = x[0];
  g.in_h = x[1];
  g.in_w = x[2];
  g.in_c = x[3];
  g.k_h = k[0];
  g.k_w = k[1];
  g.out_c = k[3];
  g.stride = stride;
  const auto ay = plan_axis(g.in_h, g.k_h, stride, padding, op);
  const auto ax = plan_axis(g.in_w, g.k_w, stride, padding, op);
  g.out_h = ay.out;
  g.out_w = ax.out;
  g.pad_top = ay.pad_before;
  g.pad_left = ax.pad_before;
  return g;
}

}  // namespace

std::size_t Graph::id_of(const Tensor& t) {
  const auto* key = &t.impl();
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  Node leaf;
  leaf.kind = OpKind::Leaf;
  leaf.output = t;
  nodes_.push_back(std::move(leaf));
  ids_.emplace(key, nodes_.size() - 1);
  return nodes_.size() - 1;
}

Tensor Graph::record(OpKind kind, std::initializer_list<const Tensor*> inputs, Tensor out,
                     std::function<void()> bw) {
  return record(kind, std::vector<const Tensor*>(inputs), std::move(out), std::move(bw));
}

Tensor Graph::record(OpKind kind, const std::vector<const Tensor*>& inputs, Tensor out, std::function<void()> bw) {
  Node n;
  n.kind = kind;
  bool needs_grad = false;
  for (const auto* in : inputs) {
    n.inputs.push_back(id_of(*in));
    needs_grad = needs_grad || in->requires_grad();
  }
  out.set_requires_grad(needs_grad);
  n.output = out;
  if (needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  ids_.emplace(&out.impl(), nodes_.size() - 1);
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  const auto it = ids_.find(&loss.impl());
  if (it == ids_.end()) throw ContractError("backward: loss tensor is not part of this graph");
  if (!loss.requires_grad()) return;
  for (auto& n : nodes_) {
    if (n.kind != OpKind::Leaf && n.output.requires_grad()) n.output.zero_grad();
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (std::size_t i = it->second + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward) n.backward();
  }
}

std::optional<std::size_t> Graph::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (double v : nodes_[i].output.data())
      if (!std::isfinite(v)) return i;
  }
  return std::nullopt;
}

void Graph::clear() {
  nodes_.clear();
  ids_.clear();
}

// ---------------------------------------------------------------------------
// Layers

Tensor Graph::dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "dense", "x");
  require_rank(w, 2, "dense", "w");
  require_rank(b, 1, "dense", "b");
  if (x.dim(1) != w.dim(0))
    throw DimensionError("dense: inner dimensions disagree, x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()));
  if (b.dim(0) != w.dim(1))
    throw DimensionError("dense: bias " + shape_str(b.shape()) + " does not match w " + shape_str(w.shape()));
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(1);
  Tensor y({batch, out});
  kernels::gemm(false, false, batch, out, in, x.data().data(), w.data().data(), y.data().data(), false);
  auto yd = y.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < out; ++j) yd[i * out + j] += bd[j];
  return record(OpKind::Dense, {&x, &w, &b}, y, [x, w, b, y, batch, in, out]() mutable {
    const double* dy = y.grad().data();
    if (x.requires_grad())
      kernels::gemm(false, true, batch, in, out, dy, w.data().data(), x.mutable_grad().data(), true);
    if (w.requires_grad())
      kernels::gemm(true, false, in, out, batch, x.data().data(), dy, w.mutable_grad().data(), true);
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < out; ++j) db[j] += dy[i * out + j];
    }
  });
}

Tensor Graph::conv2d(const Tensor& x, const Tensor& k, ConvOptions opts) {
  require_rank(x, 4, "conv2d", "x");
  require_rank(k, 4, "conv2d", "kernel");
  if (x.dim(3) != k.dim(2))
    throw DimensionError("conv2d: input channels of x " + shape_str(x.shape()) + " disagree with kernel " +
                         shape_str(k.shape()));
  const auto g = conv_geometry(x.shape(), k.shape(), opts.stride, opts.padding, "conv2d");
  Tensor y({g.batch, g.out_h, g.out_w, g.out_c});
  kernels::conv_forward(x.data().data(), k.data().data(), g, y.data().data());
  return record(OpKind::Conv2d, {&x, &k}, y, [x, k, y, g]() mutable {
    const double* dy = y.grad().data();
    if (k.requires_grad()) kernels::conv_backward_filter(x.data().data(), dy, g, k.mutable_grad().data());
    if (x.requires_grad()) kernels::conv_backward_data(dy, k.data().data(), g, x.mutable_grad().data());
  });
}

Tensor Graph::conv2d_transpose(const Tensor& x, const Tensor& k, ConvTransposeOptions opts) {
  require_rank(x, 4, "conv2d_transpose", "x");
  require_rank(k, 4, "conv2d_transpose", "kernel");
  if (x.dim(3) != k.dim(3))
    throw DimensionError("conv2d_transpose: channels of x " + shape_str(x.shape()) +
                         " disagree with kernel output channels " + shape_str(k.shape()));
  if (opts.stride < 1) throw ContractError("conv2d_transpose: stride must be >= 1");
  auto default_extent = [&](std::size_t in, std::size_t kern) {
    return opts.padding == Padding::Same ? in * opts.stride : (in - 1) * opts.stride + kern;
  };
  const std::size_t out_h = opts.out_h ? opts.out_h : default_extent(x.dim(1), k.dim(0));
  const std::size_t out_w = opts.out_w ? opts.out_w : default_extent(x.dim(2), k.dim(1));
  // Geometry of the forward convolution this op is the adjoint of.
  const Shape fwd_in{x.dim(0), out_h, out_w, k.dim(2)};
  const auto g = conv_geometry(fwd_in, k.shape(), opts.stride, opts.padding, "conv2d_transpose");
  if (g.out_h != x.dim(1) || g.out_w != x.dim(2))
    throw DimensionError("conv2d_transpose: output size " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " does not convolve back to input " + shape_str(x.shape()));
  Tensor y(fwd_in);
  kernels::conv_backward_data(x.data().data(), k.data().data(), g, y.data().data());
  return record(OpKind::Conv2dTranspose, {&x, &k}, y, [x, k, y, g]() mutable {
    const double* dy = y.grad().data();
    // y = conv^T(x, k): dx = conv(dy, k), dk = filter-grad with roles swapped.
    if (k.requires_grad()) kernels::conv_backward_filter(dy, x.data().data(), g, k.mutable_grad().data());
    if (x.requires_grad()) {
      std::vector<double> tmp(x.numel());
      kernels::conv_forward(dy, k.data().data(), g, tmp.data());
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < tmp.size(); ++i) dx[i] += tmp[i];
    }
  });
}

Tensor Graph::bias_add(const Tensor& x, const Tensor& b) {
  require_rank(b, 1, "bias_add", "b");
  const std::size_t c = b.dim(0);
  if (x.shape().back() != c)
    throw DimensionError("bias_add: bias " + shape_str(b.shape()) + " does not match x " + shape_str(x.shape()));
  Tensor y = x.clone();
  auto yd = y.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += bd[i % c];
  return record(OpKind::BiasAdd, {&x, &b}, y, [x, b, y, c]() mutable {
    auto dy = y.grad();
    if (x.requires_grad()) {
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) db[i % c] += dy[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd>
Tensor map_unary(const Tensor& x, Fwd&& f) {
  Tensor y(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = f(xd[i]);
  return y;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor Graph::relu(const Tensor& x) {
  // Written so NaN passes through instead of being masked to 0.
  Tensor y = map_unary(x, [](double v) { return v <= 0 ? 0.0 : v; });
  return record(OpKind::Relu, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xd[i] > 0) dx[i] += dy[i];
  });
}

Tensor Graph::leaky_relu(const Tensor& x, double slope) {
  Tensor y = map_unary(x, [slope](double v) { return v > 0 ? v : slope * v; });
  return record(OpKind::LeakyRelu, {&x}, y, [x, y, slope]() mutable {
    auto dy = y.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xd[i] > 0 ? dy[i] : slope * dy[i];
  });
}

Tensor Graph::sigmoid(const Tensor& x) {
  Tensor y = map_unary(x, stable_sigmoid);
  return record(OpKind::Sigmoid, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto yd = y.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * yd[i] * (1.0 - yd[i]);
  });
}

Tensor Graph::softmax(const Tensor& x) {
  require_rank(x, 2, "softmax", "x");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * cols;
    double* yr = yd.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= total;
  }
  return record(OpKind::Softmax, {&x}, y, [x, y, rows, cols]() mutable {
    auto dy = y.grad();
    auto yd = y.data();
    auto dx = x.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * yd[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += yd[r * cols + c] * (dy[r * cols + c] - dot);
    }
  });
}

Tensor Graph::exp(const Tensor& x) {
  Tensor y = map_unary(x, [](double v) { return std::exp(v); });
  return record(OpKind::Exp, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto yd = y.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * yd[i];
  });
}

Tensor Graph::log(const Tensor& x) {
  Tensor y = map_unary(x, [](double v) { return std::log(v); });
  return record(OpKind::Log, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] / xd[i];
  });
}

Tensor Graph::abs(const Tensor& x) {
  Tensor y = map_unary(x, [](double v) { return std::abs(v); });
  return record(OpKind::Abs, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xd[i] > 0 ? dy[i] : (xd[i] < 0 ? -dy[i] : 0.0);
  });
}

Tensor Graph::clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  Tensor y = map_unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return record(OpKind::Clamp, {&x}, y, [x, y, lo, hi]() mutable {
    auto dy = y.grad();
    auto xd = x.data();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xd[i] > lo && xd[i] < hi) dx[i] += dy[i];
  });
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  auto ad = a.data(), bd = b.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] + bd[i];
  return record(OpKind::Add, {&a, &b}, y, [a, b, y]() mutable {
    auto dy = y.grad();
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  });
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor y(a.shape());
  auto ad = a.data(), bd = b.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] - bd[i];
  return record(OpKind::Sub, {&a, &b}, y, [a, b, y]() mutable {
    auto dy = y.grad();
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  auto ad = a.data(), bd = b.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] * bd[i];
  return record(OpKind::Mul, {&a, &b}, y, [a, b, y]() mutable {
    auto dy = y.grad();
    if (a.requires_grad()) {
      auto da = a.mutable_grad();
      auto bd = b.data();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto db = b.mutable_grad();
      auto ad = a.data();
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * ad[i];
    }
  });
}

Tensor Graph::scale(const Tensor& x, double factor) {
  Tensor y = map_unary(x, [factor](double v) { return v * factor; });
  return record(OpKind::Scale, {&x}, y, [x, y, factor]() mutable {
    auto dy = y.grad();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
  });
}

Tensor Graph::add_scalar(const Tensor& x, double value) {
  Tensor y = map_unary(x, [value](double v) { return v + value; });
  return record(OpKind::AddScalar, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

Tensor Graph::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor y = Tensor::scalar(total);
  return record(OpKind::Sum, {&x}, y, [x, y]() mutable {
    const double g = y.grad()[0];
    auto dx = x.mutable_grad();
    for (auto& v : dx) v += g;
  });
}

Tensor Graph::mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.numel());
  Tensor y = Tensor::scalar(total / n);
  return record(OpKind::Mean, {&x}, y, [x, y, n]() mutable {
    const double g = y.grad()[0] / n;
    auto dx = x.mutable_grad();
    for (auto& v : dx) v += g;
  });
}

// ---------------------------------------------------------------------------
// Structure

Tensor Graph::reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return record(OpKind::Reshape, {&x}, y, [x, y]() mutable {
    auto dy = y.grad();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

Tensor Graph::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t total_c = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw DimensionError("concat: leading dims " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    widths.push_back(p.shape().back());
    total_c += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total_c);
  Tensor y(out_shape);
  auto yd = y.data();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pd = parts[p].data();
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pd.begin() + r * w, pd.begin() + (r + 1) * w, yd.begin() + r * total_c + offset);
    offset += w;
  }
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  std::vector<Tensor> held(parts.begin(), parts.end());
  return record(OpKind::Concat, inputs, y, [held, y, widths, rows, total_c]() mutable {
    auto dy = y.grad();
    std::size_t off = 0;
    for (std::size_t p = 0; p < held.size(); ++p) {
      const std::size_t w = widths[p];
      if (held[p].requires_grad()) {
        auto dp = held[p].mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) dp[r * w + c] += dy[r * total_c + off + c];
      }
      off += w;
    }
  });
}

Tensor Graph::channel_scale(const Tensor& x, const Tensor& ratio) {
  require_rank(x, 4, "channel_scale", "x");
  require_rank(ratio, 4, "channel_scale", "ratio");
  if (ratio.dim(3) != 1 || ratio.dim(0) != x.dim(0) || ratio.dim(1) != x.dim(1) || ratio.dim(2) != x.dim(2))
    throw DimensionError("channel_scale: ratio " + shape_str(ratio.shape()) + " cannot broadcast over " +
                         shape_str(x.shape()));
  const std::size_t c = x.dim(3);
  Tensor y(x.shape());
  auto xd = x.data(), rd = ratio.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] * rd[i / c];
  return record(OpKind::ChannelScale, {&x, &ratio}, y, [x, ratio, y, c]() mutable {
    auto dy = y.grad();
    if (x.requires_grad()) {
      auto dx = x.mutable_grad();
      auto rd = ratio.data();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * rd[i / c];
    }
    if (ratio.requires_grad()) {
      auto dr = ratio.mutable_grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < dy.size(); ++i) dr[i / c] += dy[i] * xd[i];
    }
  });
}

Tensor Graph::upsample_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "upsample_nearest", "x");
  if (out_h == 0 || out_w == 0) throw DimensionError("upsample_nearest: target size must be positive");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  // Source pixel for every destination pixel.
  std::vector<std::size_t> src(out_h * out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox) src[oy * out_w + ox] = (oy * h / out_h) * w + (ox * w / out_w);
  Tensor y({b, out_h, out_w, c});
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t p = 0; p < src.size(); ++p)
      std::copy_n(xd.begin() + (s * h * w + src[p]) * c, c, yd.begin() + (s * src.size() + p) * c);
  return record(OpKind::Upsample, {&x}, y, [x, y, src, b, h, w, c]() mutable {
    auto dy = y.grad();
    auto dx = x.mutable_grad();
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t p = 0; p < src.size(); ++p)
        for (std::size_t k = 0; k < c; ++k) dx[(s * h * w + src[p]) * c + k] += dy[(s * src.size() + p) * c + k];
  });
}

Tensor Graph::pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "pick", "x");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (index.size() != rows)
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_str(x.shape()));
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols)
      throw ContractError("pick: index " + std::to_string(idx[r]) + " out of range for " + std::to_string(cols) +
                          " columns");
    y[r] = x[r * cols + idx[r]];
  }
  return record(OpKind::Pick, {&x}, y, [x, y, idx, cols]() mutable {
    auto dy = y.grad();
    auto dx = x.mutable_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) dx[r * cols + idx[r]] += dy[r];
  });
}

}  // namespace cmi
