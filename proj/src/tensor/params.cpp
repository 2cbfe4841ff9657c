#include "cmi/params.hpp"

#include <algorithm>
#include <cmath>

#include "cmi/errors.hpp"
#include "cmi/rng.hpp"

namespace cmi {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

void ParamSet::extend(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other.entries_) {
    if (contains(prefix + name)) throw ContractError("duplicate parameter name '" + prefix + name + "'");
    entries_.emplace_back(prefix + name, t);
  }
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw ContractError("unknown parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw ContractError("unknown parameter '" + name + "'");
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& e : entries_) e.second.set_requires_grad(on);
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.second.data().begin(), e.second.data().end());
  return out;
}

Tensor xavier_init(const Shape& shape, std::uint64_t seed) {
  if (shape.size() < 2)
    throw ContractError("xavier_init needs at least 2 dims to derive fans, got " + shape_str(shape) +
                        "; zero-initialize biases instead");
  std::size_t receptive = 1;
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= shape[i];
  const double fan_in = static_cast<double>(receptive * shape[shape.size() - 2]);
  const double fan_out = static_cast<double>(receptive * shape[shape.size() - 1]);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

void adam_step(ParamSet& params, const AdamConfig& cfg, std::int64_t t, AdamState& state) {
  if (t < 1) throw ContractError("adam_step: timestep must be >= 1, got " + std::to_string(t));
  for (const auto& [name, p] : params.entries())
    if (!p.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : params.entries()) {
    auto& mom = state.moments[name];
    if (mom.m.size() != p.numel()) {
      mom.m.assign(p.numel(), 0.0);
      mom.v.assign(p.numel(), 0.0);
    }
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  state.step = t;
}

}  // namespace cmi
