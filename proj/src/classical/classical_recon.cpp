#include "cmi/classical_recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cmi/errors.hpp"

namespace cmi {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_dims(const ComplexMatrix& h, std::span<const Complex> g) {
  if (g.size() != h.rows)
    throw DimensionError("measurement length " + std::to_string(g.size()) + " does not match H with " +
                         std::to_string(h.rows) + " rows");
}

std::vector<double> magnitudes(const ComplexVector& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  return out;
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iters < 1) throw ContractError("solver max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw ContractError("solver rel_tol must be positive");
  if (!(tikhonov_alpha >= 0.0)) throw ContractError("tikhonov_alpha must be non-negative");
}

ReconResult matched_filter(const ComplexMatrix& h, std::span<const Complex> g) {
  check_dims(h, g);
  const auto t0 = Clock::now();
  ReconResult res;
  res.estimate = multiply_adjoint(h, g);
  res.rho_rec = magnitudes(res.estimate);
  res.wall_time_s = seconds_since(t0);
  auto hx = multiply(h, res.estimate);
  double r2 = 0.0;
  for (std::size_t i = 0; i < hx.size(); ++i) r2 += std::norm(g[i] - hx[i]);
  res.residual_norm = std::sqrt(r2);
  return res;
}

std::vector<double> peak_normalized(std::span<const double> rho) {
  std::vector<double> out(rho.begin(), rho.end());
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, v);
  if (peak > 0.0)
    for (double& v : out) v /= peak;
  return out;
}

ReconResult solve_ls(const ComplexMatrix& h, std::span<const Complex> g, const SolverConfig& cfg) {
  check_dims(h, g);
  cfg.validate();
  const auto t0 = Clock::now();
  const double alpha = cfg.tikhonov_alpha;
  const std::size_t n = h.cols;

  ReconResult res;
  ComplexVector x(n, Complex{});
  ComplexVector r(g.begin(), g.end());
  ComplexVector s = multiply_adjoint(h, r);
  ComplexVector p = s;
  double gamma = squared_norm(s);
  const double s0 = std::sqrt(gamma);
  res.residual_history.push_back(std::sqrt(squared_norm(r)));

  if (s0 > 0.0) {
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
      const ComplexVector q = multiply(h, p);
      const double delta = squared_norm(q) + alpha * squared_norm(p);
      if (!(delta > 0.0)) {
        res.degenerate = true;
        break;
      }
      const double a = gamma / delta;
      for (std::size_t i = 0; i < n; ++i) x[i] += a * p[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= a * q[i];
      s = multiply_adjoint(h, r);
      if (alpha > 0.0)
        for (std::size_t i = 0; i < n; ++i) s[i] -= alpha * x[i];
      const double gamma_next = squared_norm(s);
      ++res.iterations_used;
      res.residual_history.push_back(std::sqrt(squared_norm(r) + alpha * squared_norm(x)));
      if (std::sqrt(gamma_next) / s0 < cfg.rel_tol) break;
      const double beta = gamma_next / gamma;
      for (std::size_t i = 0; i < n; ++i) p[i] = s[i] + beta * p[i];
      gamma = gamma_next;
    }
  }
  res.residual_norm = res.residual_history.back();
  res.rho_rec = magnitudes(x);
  res.estimate = std::move(x);
  res.wall_time_s = seconds_since(t0);
  return res;
}

TimingStats summarize_timings(std::span<const double> seconds) {
  TimingStats st;
  st.samples = seconds.size();
  if (seconds.empty()) return st;
  for (double s : seconds) st.mean_s += s;
  st.mean_s /= static_cast<double>(seconds.size());
  if (seconds.size() > 1) {
    double var = 0.0;
    for (double s : seconds) var += (s - st.mean_s) * (s - st.mean_s);
    st.std_s = std::sqrt(var / static_cast<double>(seconds.size() - 1));
  }
  return st;
}

TimingStats time_reconstruction(ReconMethod method, const ComplexMatrix& h, std::span<const ComplexVector> samples,
                                const SolverConfig& cfg) {
  if (samples.size() < 10)
    throw ContractError("timing needs at least 10 samples for a stable mean, got " + std::to_string(samples.size()));
  auto run = [&](const ComplexVector& g) {
    return method == ReconMethod::MatchedFilter ? matched_filter(h, g) : solve_ls(h, g, cfg);
  };
  run(samples.front());  // warm-up
  std::vector<double> times;
  times.reserve(samples.size());
  for (const auto& g : samples) {
    const auto t0 = Clock::now();
    auto res = run(g);
    times.push_back(seconds_since(t0));
    (void)res;
  }
  return summarize_timings(times);
}

}  // namespace cmi
