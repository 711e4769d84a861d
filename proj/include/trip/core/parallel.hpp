#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace trip {

// Global switch used by the CLI's --deterministic/--workers flags. The OpenMP
// kernels in this project only parallelize loops whose iterations write
// disjoint outputs (reductions are chunked in fixed order), so results are
// bit-identical for any thread count; the switch exists to pin resource usage.
inline int& max_threads() {
    static int n = 0;  // 0 = OpenMP default
    return n;
}

inline void set_max_threads(int n) { max_threads() = n; }

inline int effective_threads() {
#ifdef _OPENMP
    int n = max_threads();
    return n > 0 ? n : omp_get_max_threads();
#else
    return 1;
#endif
}

// Parallel loop over [0, n) with static scheduling; body(i) must only touch
// slot i of its outputs.
template <typename F>
void parallel_for(int64_t n, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(trip::effective_threads())
    for (int64_t i = 0; i < n; ++i) body(i);
#else
    for (int64_t i = 0; i < n; ++i) body(i);
#endif
}

template <typename F>
void serial_for(int64_t n, F&& body) {
    for (int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace trip
