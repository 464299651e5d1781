#pragma once

#include <cstddef>

namespace zinbsf::detail {

/// Runs fn(i) for i in [0, n). With OpenMP and threads > 1 the range is split
/// statically; callers write to disjoint slots and reduce afterwards in index
/// order, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, int threads, Fn&& fn) {
#if defined(_OPENMP)
  if (threads > 1 && n > 256) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)threads;
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

} // namespace zinbsf::detail
