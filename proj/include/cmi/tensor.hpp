#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cmi {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  TensorImpl(Shape s, std::vector<double> d);

  const Shape shape;
  std::vector<double> data;
  // Empty until the first accumulation or zero_grad().
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Dense row-major float64 tensor. Copies are handles onto the same storage,
/// which is what lets a parameter accumulate gradients from any graph it
/// takes part in. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return impl().data.size(); }

  std::span<double> data() { return impl().data; }
  std::span<const double> data() const { return impl().data; }
  double item() const;
  double& operator[](std::size_t i) { return impl().data[i]; }
  double operator[](std::size_t i) const { return impl().data[i]; }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<const double> grad() const { return impl().grad; }
  /// Grad buffer, allocated as zeros on first access.
  std::span<double> mutable_grad() const;
  /// Sets the gradient to zeros (allocating if needed).
  void zero_grad() const;

  /// Deep copy of shape and values; the copy is a fresh leaf without grad.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl& impl() const;
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace cmi
