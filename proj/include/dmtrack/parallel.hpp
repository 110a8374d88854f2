#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dmtrack::par {

// Every parallel kernel in this repo writes to disjoint output slots (one per
// work item) and performs any floating-point reduction afterwards in a fixed
// serial order, so results are bit-identical for any thread count, including
// the serial path. Tests compare the two paths directly.

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Runs f(i) for i in [0, n). parallel=false forces the serial reference path.
template <typename F>
inline void parallel_for(std::size_t n, F&& f, bool parallel = true) {
#ifdef _OPENMP
    if (parallel && n > 1) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            f(static_cast<std::size_t>(i));
        }
        return;
    }
#else
    (void)parallel;
#endif
    for (std::size_t i = 0; i < n; ++i) f(i);
}

}  // namespace dmtrack::par
