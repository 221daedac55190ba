#include "blade/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <vector>

namespace blade::kernels {

namespace {

int g_thread_cap = 0;

int env_cap() {
    static int cap = [] {
        const char* s = std::getenv("BLADE_SIM_THREADS");
        if (!s) return 0;
        int v = std::atoi(s);
        return v > 0 ? v : 0;
    }();
    return cap;
}

// below this many scalar ops the fork overhead dominates
constexpr size_t parallel_threshold = 1 << 15;

} // namespace

void set_threads(int n) { g_thread_cap = n < 0 ? 0 : n; }

int max_threads() {
    int t = omp_get_max_threads();
    if (env_cap() > 0) t = std::min(t, env_cap());
    if (g_thread_cap > 0) t = std::min(t, g_thread_cap);
    return std::max(1, t);
}

bool parallel_worthwhile(size_t work) { return work >= parallel_threshold && max_threads() > 1; }

namespace {

inline double block_dot(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double block_dot_pm1(const double* a, const int8_t* c, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += c[i] > 0 ? a[i] : -a[i];
    return s;
}

inline double block_sum(const double* a, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

inline double block_sum_squares(const double* a, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

// Runs `block_fn(block_index)` over ceil(n/reduce_block) blocks, possibly in
// parallel, then combines partials serially in block order.
template <typename BlockFn>
double blocked_reduce(size_t n, size_t work_per_elem, BlockFn block_fn) {
    const size_t nblocks = (n + reduce_block - 1) / reduce_block;
    if (nblocks <= 1) return n == 0 ? 0.0 : block_fn(size_t{0});
    std::vector<double> partial(nblocks);
    const bool par = parallel_worthwhile(n * work_per_elem);
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (par)
    for (int64_t b = 0; b < static_cast<int64_t>(nblocks); ++b) {
        partial[static_cast<size_t>(b)] = block_fn(static_cast<size_t>(b));
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace

double dot(const double* a, const double* b, size_t n) {
    return blocked_reduce(n, 2, [&](size_t blk) {
        const size_t lo = blk * reduce_block;
        const size_t len = std::min(reduce_block, n - lo);
        return block_dot(a + lo, b + lo, len);
    });
}

double dot_pm1(const double* a, const int8_t* chips, size_t n) {
    return blocked_reduce(n, 1, [&](size_t blk) {
        const size_t lo = blk * reduce_block;
        const size_t len = std::min(reduce_block, n - lo);
        return block_dot_pm1(a + lo, chips + lo, len);
    });
}

double sum(const double* a, size_t n) {
    return blocked_reduce(n, 1, [&](size_t blk) {
        const size_t lo = blk * reduce_block;
        const size_t len = std::min(reduce_block, n - lo);
        return block_sum(a + lo, len);
    });
}

double sum_squares(const double* a, size_t n) {
    return blocked_reduce(n, 2, [&](size_t blk) {
        const size_t lo = blk * reduce_block;
        const size_t len = std::min(reduce_block, n - lo);
        return block_sum_squares(a + lo, len);
    });
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    const bool par = parallel_worthwhile(n);
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (par)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) y[i] += alpha * x[i];
}

void transpose_product(const double* a, const double* b, double* out, size_t n, size_t rows,
                       size_t cols) {
    constexpr size_t tile = 256;
    const size_t ntiles = (cols + tile - 1) / tile;
    const size_t tasks = rows * ntiles;
    const bool par = parallel_worthwhile(n * rows * cols) && tasks > 1;
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (par)
    for (int64_t t = 0; t < static_cast<int64_t>(tasks); ++t) {
        const size_t r = static_cast<size_t>(t) / ntiles;
        const size_t c0 = (static_cast<size_t>(t) % ntiles) * tile;
        const size_t c1 = std::min(cols, c0 + tile);
        double* orow = out + r * cols;
        for (size_t c = c0; c < c1; ++c) orow[c] = 0.0;
        for (size_t s = 0; s < n; ++s) {
            const double av = a[s * rows + r];
            const double* brow = b + s * cols;
            for (size_t c = c0; c < c1; ++c) orow[c] += av * brow[c];
        }
    }
}

void column_sums(const double* a, double* out, size_t n, size_t cols) {
    constexpr size_t tile = 256;
    const size_t ntiles = (cols + tile - 1) / tile;
    const bool par = parallel_worthwhile(n * cols) && ntiles > 1;
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (par)
    for (int64_t t = 0; t < static_cast<int64_t>(ntiles); ++t) {
        const size_t c0 = static_cast<size_t>(t) * tile;
        const size_t c1 = std::min(cols, c0 + tile);
        for (size_t c = c0; c < c1; ++c) out[c] = 0.0;
        for (size_t s = 0; s < n; ++s) {
            const double* row = a + s * cols;
            for (size_t c = c0; c < c1; ++c) out[c] += row[c];
        }
    }
}

} // namespace blade::kernels
