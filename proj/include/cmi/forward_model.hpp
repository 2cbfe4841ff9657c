#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cmi/tensor.hpp"

namespace cmi {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

/// Row-major M x N complex matrix. std::complex<double> is layout-compatible
/// with interleaved (re, im) float64 pairs.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Complex> data;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t m, std::size_t n);
  ComplexMatrix(std::size_t m, std::size_t n, std::vector<Complex> values);

  static ComplexMatrix identity(std::size_t n);

  Complex& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// y = H x.
ComplexVector multiply(const ComplexMatrix& h, std::span<const Complex> x);
/// x = H^H y.
ComplexVector multiply_adjoint(const ComplexMatrix& h, std::span<const Complex> y);

double squared_norm(std::span<const Complex> v);

/// Discretized scene plane parallel to the aperture.
struct SceneConfig {
  std::size_t pixels_x = 28;
  std::size_t pixels_y = 28;
  double pixel_pitch = 0.01;  // m
  double standoff = 0.5;      // m, scene plane distance from the aperture plane

  std::size_t pixel_count() const { return pixels_x * pixels_y; }
  void validate() const;
};

enum class SynthesisMode { Gaussian, Greens };

/// Frequency-diverse bistatic aperture scanned over a square grid of
/// positions. Mode index m = position * n_freqs + frequency.
struct ApertureConfig {
  std::size_t n_freqs = 64;
  double f_min = 8e9;
  double f_max = 12e9;
  std::size_t n_positions = 16;
  double position_pitch = 0.08;  // m
  std::size_t aperture_points = 100;
  double panel_size = 0.1;        // m, side of each square panel
  double panel_separation = 0.15; // m, Tx-Rx centre distance along x
  SynthesisMode mode = SynthesisMode::Gaussian;

  std::size_t mode_count() const { return n_freqs * n_positions; }
  double frequency(std::size_t k) const;
  void validate() const;
};

struct Point3 {
  double x = 0, y = 0, z = 0;
};

/// Pixel centres of the scene grid, row-major, at z = standoff.
std::vector<Point3> scene_pixels(const SceneConfig& scene);

/// Aperture grid offsets (z = 0), row-major on a ceil(sqrt(n))-wide grid
/// centred on the origin.
std::vector<Point3> aperture_positions(const ApertureConfig& aperture);

/// Scalar field sum_q w_q exp(-j k R) / (4 pi R) at every target, k = 2 pi f / c.
ComplexVector radiate_field(std::span<const Point3> sources, std::span<const Complex> weights, double freq_hz,
                            std::span<const Point3> targets);

ComplexMatrix synthesize_H(const SceneConfig& scene, const ApertureConfig& aperture, std::uint64_t seed);

/// g = H rho + n. Noise is circular complex Gaussian with total expected
/// power ||H rho||^2 / 10^(snr_db / 10); no noise when snr_db is empty.
ComplexVector forward_measure(const ComplexMatrix& h, std::span<const double> rho, std::optional<double> snr_db,
                              std::uint64_t seed);

/// [M, 2] tensor: column 0 real parts, column 1 imaginary parts.
Tensor split_complex(std::span<const Complex> g);
ComplexVector merge_complex(const Tensor& t);

/// Per-channel (real, imaginary) statistics over a training set.
struct NormStats {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> std{1.0, 1.0};
};

struct NormalizedSet {
  std::vector<Tensor> inputs;
  NormStats stats;
};

/// Population mean/std per channel (last dim of size 2) over every input.
NormStats compute_norm_stats(std::span<const Tensor> inputs);
Tensor apply_normalization(const NormStats& stats, const Tensor& input);
NormalizedSet normalize_dataset(std::span<const Tensor> inputs);

}  // namespace cmi
