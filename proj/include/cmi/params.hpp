#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cmi/tensor.hpp"

namespace cmi {

/// Ordered collection of named trainable tensors. Iteration order is the
/// insertion order, which fixes the layout of checkpoints.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Registers t under name and marks it trainable.
  Tensor& add(const std::string& name, Tensor t);
  /// Appends every entry of other, prefixing names.
  void extend(const ParamSet& other, const std::string& prefix = "");

  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();
  void set_requires_grad(bool on);
  /// Deep copy of every value, for freeze assertions and snapshots.
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::vector<Entry> entries_;
};

/// Glorot-uniform draw on +-sqrt(6 / (fan_in + fan_out)). For kernels of
/// shape [kh, kw, cin, cout] the receptive field multiplies both fans.
Tensor xavier_init(const Shape& shape, std::uint64_t seed);

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers, one pair per parameter name.
struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update at timestep t (t >= 1) over every entry
/// of params. Every parameter must carry a gradient.
void adam_step(ParamSet& params, const AdamConfig& cfg, std::int64_t t, AdamState& state);

}  // namespace cmi
