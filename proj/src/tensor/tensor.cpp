#include "cmi/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "cmi/errors.hpp"

namespace cmi {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorImpl::TensorImpl(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto dim : shape)
    if (dim == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
}

Tensor::Tensor(Shape shape, double fill) {
  const auto n = shape_numel(shape);
  impl_ = std::make_shared<TensorImpl>(std::move(shape), std::vector<double>(n, fill));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : impl_(std::make_shared<TensorImpl>(std::move(shape), std::move(data))) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size())
    throw DimensionError("dimension index " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[i];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() const {
  auto& t = impl();
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

void Tensor::zero_grad() const {
  auto& t = impl();
  if (t.grad.empty())
    t.grad.assign(t.data.size(), 0.0);
  else
    std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(shape(), impl().data); }

}  // namespace cmi
