#pragma once

#include <cstddef>
#include <functional>

namespace cmi {

/// Process-wide worker count used by the heavy kernels. 1 is the reference
/// mode for bit-exact tests; work decomposition never depends on this value.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, count). Iterations are split into contiguous
/// blocks, one per worker. fn must only write state owned by iteration i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace cmi
