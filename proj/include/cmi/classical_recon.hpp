#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmi/forward_model.hpp"

namespace cmi {

struct SolverConfig {
  std::size_t max_iters = 100;
  double rel_tol = 1e-6;
  double tikhonov_alpha = 0.0;

  void validate() const;
};

struct ReconResult {
  std::vector<double> rho_rec;  // |estimate|, elementwise
  ComplexVector estimate;
  std::size_t iterations_used = 0;
  /// ||g - H x|| (augmented with sqrt(alpha) x when regularized).
  double residual_norm = 0.0;
  double wall_time_s = 0.0;
  /// Residual norm before the first iteration and after each one.
  std::vector<double> residual_history;
  /// Set when the search direction lost curvature before convergence.
  bool degenerate = false;
};

/// Back-projection |H^H g|.
ReconResult matched_filter(const ComplexMatrix& h, std::span<const Complex> g);

/// Copy of rho scaled so its largest entry is 1. The matched filter is only
/// defined up to scale, so its image is compared against [0, 1] targets this
/// way. All-zero input is returned unchanged.
std::vector<double> peak_normalized(std::span<const double> rho);

/// CGLS on (H^H H + alpha I) x = H^H g. Stops after max_iters or once
/// ||H^H (g - H x) - alpha x|| / ||H^H g|| < rel_tol.
ReconResult solve_ls(const ComplexMatrix& h, std::span<const Complex> g, const SolverConfig& cfg);

enum class ReconMethod { MatchedFilter, LeastSquares };

struct TimingStats {
  double mean_s = 0.0;
  double std_s = 0.0;
  std::size_t samples = 0;
};

/// Per-sample wall time over samples (at least 10), one untimed warm-up run.
TimingStats time_reconstruction(ReconMethod method, const ComplexMatrix& h, std::span<const ComplexVector> samples,
                                const SolverConfig& cfg = {});

/// Mean and sample standard deviation of a list of durations.
TimingStats summarize_timings(std::span<const double> seconds);

}  // namespace cmi
