#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "cmi/parallel.hpp"

namespace cmi::kernels {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// im2col buffer budgets in doubles. Forward and backward-data stay cache
// sized; backward-filter reduces over rows, so longer chunks feed the GEMM
// a deeper inner dimension.
constexpr std::size_t kColsBudget = std::size_t{1} << 16;
constexpr std::size_t kFilterColsBudget = std::size_t{1} << 18;
}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MutMap C(c, M, N);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b)
    C.noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
  else if (trans_a && !trans_b)
    C.noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, K, N);
  else if (!trans_a && trans_b)
    C.noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
  else
    C.noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, N, K).transpose();
}

std::size_t ConvGeometry::chunk_samples(std::size_t budget_elems) const {
  const std::size_t per_sample = std::max<std::size_t>(1, out_pixels() * patch());
  return std::clamp<std::size_t>(budget_elems / per_sample, 1, batch);
}

void im2col(const double* x, const ConvGeometry& g, std::size_t s0, std::size_t s1, double* cols) {
  const std::size_t patch = g.patch();
  double* row = cols;
  for (std::size_t s = s0; s < s1; ++s) {
    const double* xs = x + s * g.in_h * g.in_w * g.in_c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, row += patch) {
        double* dst = row;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kx = 0; kx < g.k_w; ++kx, dst += g.in_c) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              std::fill(dst, dst + g.in_c, 0.0);
            } else {
              const double* src = xs + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
              std::copy(src, src + g.in_c, dst);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t s0, std::size_t s1, double* x) {
  const std::size_t patch = g.patch();
  const double* row = cols;
  for (std::size_t s = s0; s < s1; ++s) {
    double* xs = x + s * g.in_h * g.in_w * g.in_c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, row += patch) {
        const double* src = row;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kx = 0; kx < g.k_w; ++kx, src += g.in_c) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w))
              continue;
            double* dst = xs + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

namespace {

template <typename Fn>
void for_each_chunk(const ConvGeometry& g, Fn&& fn) {
  const std::size_t per = g.chunk_samples(kColsBudget);
  const std::size_t chunks = (g.batch + per - 1) / per;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t s0 = c * per;
    const std::size_t s1 = std::min(g.batch, s0 + per);
    fn(c, s0, s1);
  });
}

}  // namespace

void conv_forward(const double* x, const double* k, const ConvGeometry& g, double* y) {
  const std::size_t patch = g.patch();
  const std::size_t in_stride = g.in_h * g.in_w * g.in_c;
  const std::size_t out_stride = g.out_pixels() * g.out_c;
  if (g.pointwise()) {
    for_each_chunk(g, [&](std::size_t, std::size_t s0, std::size_t s1) {
      gemm(false, false, (s1 - s0) * g.out_pixels(), g.out_c, patch, x + s0 * in_stride, k, y + s0 * out_stride,
           false);
    });
    return;
  }
  for_each_chunk(g, [&](std::size_t, std::size_t s0, std::size_t s1) {
    const std::size_t rows = (s1 - s0) * g.out_pixels();
    std::vector<double> cols(rows * patch);
    im2col(x, g, s0, s1, cols.data());
    gemm(false, false, rows, g.out_c, patch, cols.data(), k, y + s0 * out_stride, false);
  });
}

void conv_backward_data(const double* dy, const double* k, const ConvGeometry& g, double* dx) {
  const std::size_t patch = g.patch();
  const std::size_t in_stride = g.in_h * g.in_w * g.in_c;
  const std::size_t out_stride = g.out_pixels() * g.out_c;
  if (g.pointwise()) {
    for_each_chunk(g, [&](std::size_t, std::size_t s0, std::size_t s1) {
      gemm(false, true, (s1 - s0) * g.out_pixels(), patch, g.out_c, dy + s0 * out_stride, k, dx + s0 * in_stride,
           true);
    });
    return;
  }
  for_each_chunk(g, [&](std::size_t, std::size_t s0, std::size_t s1) {
    const std::size_t rows = (s1 - s0) * g.out_pixels();
    std::vector<double> cols(rows * patch);
    gemm(false, true, rows, patch, g.out_c, dy + s0 * out_stride, k, cols.data(), false);
    col2im_add(cols.data(), g, s0, s1, dx);
  });
}

void conv_backward_filter(const double* x, const double* dy, const ConvGeometry& g, double* dk) {
  const std::size_t patch = g.patch();
  const std::size_t in_stride = g.in_h * g.in_w * g.in_c;
  const std::size_t out_stride = g.out_pixels() * g.out_c;
  const std::size_t per = g.chunk_samples(kFilterColsBudget);
  const std::size_t chunks = (g.batch + per - 1) / per;
  // Chunks run in groups of one per worker; each group's partials are added
  // to dk in chunk order, so the sum never depends on the thread count.
  const std::size_t group = std::min<std::size_t>(chunks, static_cast<std::size_t>(std::max(1, num_threads())));
  std::vector<std::vector<double>> partial(group);
  for (std::size_t first = 0; first < chunks; first += group) {
    const std::size_t n = std::min(group, chunks - first);
    parallel_for(n, [&](std::size_t j) {
      const std::size_t s0 = (first + j) * per;
      const std::size_t s1 = std::min(g.batch, s0 + per);
      const std::size_t rows = (s1 - s0) * g.out_pixels();
      partial[j].assign(patch * g.out_c, 0.0);
      if (g.pointwise()) {
        gemm(true, false, patch, g.out_c, rows, x + s0 * in_stride, dy + s0 * out_stride, partial[j].data(), false);
      } else {
        std::vector<double> cols(rows * patch);
        im2col(x, g, s0, s1, cols.data());
        gemm(true, false, patch, g.out_c, rows, cols.data(), dy + s0 * out_stride, partial[j].data(), false);
      }
    });
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < partial[j].size(); ++i) dk[i] += partial[j][i];
  }
}

}  // namespace cmi::kernels
