#include "cmi/forward_model.hpp"

#include <cmath>
#include <numbers>

#include "cmi/errors.hpp"
#include "cmi/parallel.hpp"
#include "cmi/rng.hpp"

namespace cmi {

namespace {
constexpr double kSpeedOfLight = 299792458.0;

Complex complex_normal(Rng& rng) {
  const double re = rng.normal();
  const double im = rng.normal();
  return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
}
}  // namespace

ComplexMatrix::ComplexMatrix(std::size_t m, std::size_t n) : rows(m), cols(n), data(m * n) {}

ComplexMatrix::ComplexMatrix(std::size_t m, std::size_t n, std::vector<Complex> values)
    : rows(m), cols(n), data(std::move(values)) {
  if (data.size() != m * n)
    throw DimensionError("complex matrix " + std::to_string(m) + "x" + std::to_string(n) + " given " +
                         std::to_string(data.size()) + " entries");
}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix h(n, n);
  for (std::size_t i = 0; i < n; ++i) h(i, i) = 1.0;
  return h;
}

ComplexVector multiply(const ComplexMatrix& h, std::span<const Complex> x) {
  if (x.size() != h.cols)
    throw DimensionError("H has " + std::to_string(h.cols) + " columns but x has length " + std::to_string(x.size()));
  ComplexVector y(h.rows);
  const auto* hp = reinterpret_cast<const double*>(h.data.data());
  const auto* xp = reinterpret_cast<const double*>(x.data());
  for (std::size_t r = 0; r < h.rows; ++r) {
    const double* row = hp + 2 * r * h.cols;
    double re = 0.0, im = 0.0;
    for (std::size_t c = 0; c < h.cols; ++c) {
      re += row[2 * c] * xp[2 * c] - row[2 * c + 1] * xp[2 * c + 1];
      im += row[2 * c] * xp[2 * c + 1] + row[2 * c + 1] * xp[2 * c];
    }
    y[r] = {re, im};
  }
  return y;
}

ComplexVector multiply_adjoint(const ComplexMatrix& h, std::span<const Complex> y) {
  if (y.size() != h.rows)
    throw DimensionError("H has " + std::to_string(h.rows) + " rows but y has length " + std::to_string(y.size()));
  std::vector<double> acc(2 * h.cols, 0.0);
  const auto* hp = reinterpret_cast<const double*>(h.data.data());
  for (std::size_t r = 0; r < h.rows; ++r) {
    const double* row = hp + 2 * r * h.cols;
    const double yr = y[r].real(), yi = y[r].imag();
    // conj(h) * y
    for (std::size_t c = 0; c < h.cols; ++c) {
      acc[2 * c] += row[2 * c] * yr + row[2 * c + 1] * yi;
      acc[2 * c + 1] += row[2 * c] * yi - row[2 * c + 1] * yr;
    }
  }
  ComplexVector x(h.cols);
  for (std::size_t c = 0; c < h.cols; ++c) x[c] = {acc[2 * c], acc[2 * c + 1]};
  return x;
}

double squared_norm(std::span<const Complex> v) {
  double s = 0.0;
  for (const auto& z : v) s += z.real() * z.real() + z.imag() * z.imag();
  return s;
}

void SceneConfig::validate() const {
  if (pixels_x == 0 || pixels_y == 0) throw ContractError("scene must have at least one pixel per axis");
  if (!(pixel_pitch > 0.0)) throw ContractError("pixel_pitch must be positive");
  if (!(standoff >= 0.0)) throw ContractError("standoff must be non-negative");
}

double ApertureConfig::frequency(std::size_t k) const {
  if (n_freqs == 1) return f_min;
  return f_min + (f_max - f_min) * static_cast<double>(k) / static_cast<double>(n_freqs - 1);
}

void ApertureConfig::validate() const {
  if (n_freqs == 0 || n_positions == 0) throw ContractError("aperture needs at least one frequency and position");
  if (!(f_min > 0.0) || !(f_min < f_max)) throw ContractError("frequency band requires 0 < f_min < f_max");
  if (!(position_pitch > 0.0)) throw ContractError("position_pitch must be positive");
  if (mode == SynthesisMode::Greens && aperture_points == 0)
    throw ContractError("greens synthesis needs at least one aperture point");
  if (!(panel_size >= 0.0)) throw ContractError("panel_size must be non-negative");
}

std::vector<Point3> scene_pixels(const SceneConfig& scene) {
  std::vector<Point3> px;
  px.reserve(scene.pixel_count());
  const double cy = 0.5 * static_cast<double>(scene.pixels_y - 1);
  const double cx = 0.5 * static_cast<double>(scene.pixels_x - 1);
  for (std::size_t iy = 0; iy < scene.pixels_y; ++iy)
    for (std::size_t ix = 0; ix < scene.pixels_x; ++ix)
      px.push_back({(static_cast<double>(ix) - cx) * scene.pixel_pitch, (static_cast<double>(iy) - cy) * scene.pixel_pitch,
                    scene.standoff});
  return px;
}

std::vector<Point3> aperture_positions(const ApertureConfig& aperture) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(aperture.n_positions))));
  const std::size_t rows = (aperture.n_positions + side - 1) / side;
  std::vector<Point3> pos;
  for (std::size_t p = 0; p < aperture.n_positions; ++p) {
    const double ix = static_cast<double>(p % side) - 0.5 * static_cast<double>(side - 1);
    const double iy = static_cast<double>(p / side) - 0.5 * static_cast<double>(rows - 1);
    pos.push_back({ix * aperture.position_pitch, iy * aperture.position_pitch, 0.0});
  }
  return pos;
}

ComplexVector radiate_field(std::span<const Point3> sources, std::span<const Complex> weights, double freq_hz,
                            std::span<const Point3> targets) {
  if (sources.size() != weights.size())
    throw DimensionError("radiate_field: " + std::to_string(sources.size()) + " sources but " +
                         std::to_string(weights.size()) + " weights");
  const double k = 2.0 * std::numbers::pi * freq_hz / kSpeedOfLight;
  ComplexVector field(targets.size());
  for (std::size_t n = 0; n < targets.size(); ++n) {
    double re = 0.0, im = 0.0;
    for (std::size_t q = 0; q < sources.size(); ++q) {
      const double dx = targets[n].x - sources[q].x;
      const double dy = targets[n].y - sources[q].y;
      const double dz = targets[n].z - sources[q].z;
      const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (r == 0.0) throw SingularityError("radiate_field: source coincides with a target point");
      const double amp = 1.0 / (4.0 * std::numbers::pi * r);
      const double c = std::cos(k * r) * amp, s = -std::sin(k * r) * amp;
      re += weights[q].real() * c - weights[q].imag() * s;
      im += weights[q].real() * s + weights[q].imag() * c;
    }
    field[n] = {re, im};
  }
  return field;
}

ComplexMatrix synthesize_H(const SceneConfig& scene, const ApertureConfig& aperture, std::uint64_t seed) {
  scene.validate();
  aperture.validate();
  const std::size_t m = aperture.mode_count();
  const std::size_t n = scene.pixel_count();
  ComplexMatrix h(m, n);
  if (aperture.mode == SynthesisMode::Gaussian) {
    Rng rng(seed);
    for (auto& z : h.data) z = complex_normal(rng);
    return h;
  }

  if (scene.standoff == 0.0) throw SingularityError("greens synthesis: zero standoff places the scene on the aperture");
  const auto pixels = scene_pixels(scene);
  const auto positions = aperture_positions(aperture);
  const std::size_t q = aperture.aperture_points;

  // Panel sample points (fixed hardware) and per-frequency radiating weights.
  Rng geo(mix_seed(seed, 0));
  auto panel = [&](double centre_x) {
    std::vector<Point3> pts(q);
    for (auto& p : pts)
      p = {centre_x + geo.uniform(-0.5, 0.5) * aperture.panel_size, geo.uniform(-0.5, 0.5) * aperture.panel_size, 0.0};
    return pts;
  };
  const auto tx_panel = panel(-0.5 * aperture.panel_separation);
  const auto rx_panel = panel(0.5 * aperture.panel_separation);
  std::vector<ComplexVector> tx_w(aperture.n_freqs), rx_w(aperture.n_freqs);
  Rng wr(mix_seed(seed, 1));
  for (std::size_t k = 0; k < aperture.n_freqs; ++k) {
    tx_w[k].resize(q);
    rx_w[k].resize(q);
    for (auto& w : tx_w[k]) w = complex_normal(wr);
    for (auto& w : rx_w[k]) w = complex_normal(wr);
  }

  parallel_for(m, [&](std::size_t mode) {
    const std::size_t p = mode / aperture.n_freqs;
    const std::size_t k = mode % aperture.n_freqs;
    auto shifted = [&](const std::vector<Point3>& pts) {
      std::vector<Point3> out(pts);
      for (auto& pt : out) {
        pt.x += positions[p].x;
        pt.y += positions[p].y;
      }
      return out;
    };
    const auto e_tx = radiate_field(shifted(tx_panel), tx_w[k], aperture.frequency(k), pixels);
    const auto e_rx = radiate_field(shifted(rx_panel), rx_w[k], aperture.frequency(k), pixels);
    for (std::size_t i = 0; i < n; ++i) h(mode, i) = e_tx[i] * e_rx[i];
  });
  return h;
}

ComplexVector forward_measure(const ComplexMatrix& h, std::span<const double> rho, std::optional<double> snr_db,
                              std::uint64_t seed) {
  if (rho.size() != h.cols)
    throw DimensionError("forward_measure: rho has length " + std::to_string(rho.size()) + " but H has " +
                         std::to_string(h.cols) + " columns");
  for (double v : rho)
    if (!(v >= 0.0)) throw ContractError("forward_measure: reflectivity must be non-negative and finite");
  ComplexVector x(rho.begin(), rho.end());
  ComplexVector g = multiply(h, x);
  if (!snr_db) return g;
  const double signal = squared_norm(g);
  const double per_entry = signal / (static_cast<double>(h.rows) * std::pow(10.0, *snr_db / 10.0));
  const double sigma = std::sqrt(per_entry);
  Rng rng(seed);
  for (auto& z : g) z += sigma * complex_normal(rng);
  return g;
}

Tensor split_complex(std::span<const Complex> g) {
  Tensor t({g.size(), 2});
  for (std::size_t i = 0; i < g.size(); ++i) {
    t[2 * i] = g[i].real();
    t[2 * i + 1] = g[i].imag();
  }
  return t;
}

ComplexVector merge_complex(const Tensor& t) {
  if (t.shape().back() != 2) throw DimensionError("merge_complex expects a trailing dimension of 2, got " + shape_str(t.shape()));
  ComplexVector g(t.numel() / 2);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = {t[2 * i], t[2 * i + 1]};
  return g;
}

NormStats compute_norm_stats(std::span<const Tensor> inputs) {
  if (inputs.size() < 2) throw ContractError("normalization needs at least 2 samples");
  std::array<double, 2> sum{0, 0}, count{0, 0};
  for (const auto& t : inputs) {
    if (t.shape().back() != 2) throw DimensionError("normalization expects [..., 2] inputs, got " + shape_str(t.shape()));
    for (std::size_t i = 0; i < t.numel(); ++i) {
      sum[i % 2] += t[i];
      count[i % 2] += 1.0;
    }
  }
  NormStats st;
  for (int c = 0; c < 2; ++c) st.mean[c] = sum[c] / count[c];
  std::array<double, 2> sq{0, 0};
  for (const auto& t : inputs)
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double d = t[i] - st.mean[i % 2];
      sq[i % 2] += d * d;
    }
  for (int c = 0; c < 2; ++c) {
    st.std[c] = std::sqrt(sq[c] / count[c]);
    if (!(st.std[c] > 0.0))
      throw DegenerateDataError(std::string("normalization: ") + (c == 0 ? "real" : "imaginary") +
                                " channel has zero variance");
  }
  return st;
}

Tensor apply_normalization(const NormStats& stats, const Tensor& input) {
  if (input.shape().back() != 2) throw DimensionError("normalization expects [..., 2] input, got " + shape_str(input.shape()));
  Tensor out = input.clone();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - stats.mean[i % 2]) / stats.std[i % 2];
  return out;
}

NormalizedSet normalize_dataset(std::span<const Tensor> inputs) {
  NormalizedSet set;
  set.stats = compute_norm_stats(inputs);
  set.inputs.reserve(inputs.size());
  for (const auto& t : inputs) set.inputs.push_back(apply_normalization(set.stats, t));
  return set;
}

}  // namespace cmi
