#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace disparity::par {

#ifdef _OPENMP
inline int max_threads() { return omp_get_max_threads(); }
#else
inline int max_threads() { return 1; }
#endif

// Reductions below split the index range into fixed-size chunks and add the
// chunk partials in chunk order, so the result is bitwise identical for any
// thread count (including 1). Small inputs take the plain serial path; the
// cutover depends only on n, never on the thread count.
inline constexpr std::size_t kChunk = 8192;

template <class F>
double det_sum(std::size_t n, F&& f) {
    if (n <= kChunk) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += f(i);
        return acc;
    }
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(nchunks); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += f(i);
        partial[static_cast<std::size_t>(c)] = acc;
    }
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

// Element-wise parallel loop; each index written by exactly one iteration,
// so ordering does not affect the result.
template <class F>
void for_each_index(std::size_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        f(static_cast<std::size_t>(i));
    }
}

}  // namespace disparity::par
