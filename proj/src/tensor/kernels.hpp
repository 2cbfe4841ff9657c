#pragma once

// Internal dense kernels shared by the graph ops. Not part of the public API.

#include <cstddef>
#include <vector>

namespace cmi::kernels {

/// C (m x n) = op(A) * op(B) [+ C]. Row-major. op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0, out_c = 0;
  std::size_t stride = 1;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;

  std::size_t patch() const { return k_h * k_w * in_c; }
  std::size_t out_pixels() const { return out_h * out_w; }
  bool pointwise() const { return k_h == 1 && k_w == 1 && stride == 1 && out_h == in_h && out_w == in_w; }
  /// Samples per chunk such that an im2col buffer stays within
  /// budget_elems (at least one sample). Depends on geometry only, never on
  /// the thread count.
  std::size_t chunk_samples(std::size_t budget_elems) const;
};

/// cols[(s - s0) * out_pixels + oy * out_w + ox][(ky * k_w + kx) * in_c + c]
void im2col(const double* x, const ConvGeometry& g, std::size_t s0, std::size_t s1, double* cols);

/// Adjoint of im2col: scatter-adds cols back onto the input grid.
void col2im_add(const double* cols, const ConvGeometry& g, std::size_t s0, std::size_t s1, double* x);

/// y = conv(x, k) over all samples.
void conv_forward(const double* x, const double* k, const ConvGeometry& g, double* y);
/// dx += conv backward-data(dy, k).
void conv_backward_data(const double* dy, const double* k, const ConvGeometry& g, double* dx);
/// dk += conv backward-filter(x, dy). Chunk partials are reduced in chunk order.
void conv_backward_filter(const double* x, const double* dy, const ConvGeometry& g, double* dk);

}  // namespace cmi::kernels
