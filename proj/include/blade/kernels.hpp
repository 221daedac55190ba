#pragma once
#include <cstddef>
#include <cstdint>

// Hot numeric loops shared by training, evaluation and watermark correlation.
// Every kernel is deterministic for ANY thread count: reductions run over
// fixed-size blocks combined in block order, and parallel loops write
// disjoint output slots. Running with 1 thread or 64 gives bit-identical
// results, which the simulator's determinism contracts rely on.

namespace blade::kernels {

// Thread cap. 0 = use OpenMP default, bounded by the BLADE_SIM_THREADS env
// var when set. Applies to every kernel and to sweep-level parallelism.
void set_threads(int n);
int max_threads();

// true when a loop with `work` scalar operations is worth forking for
bool parallel_worthwhile(size_t work);

inline constexpr size_t reduce_block = 1024;

double dot(const double* a, const double* b, size_t n);
double dot_pm1(const double* a, const int8_t* chips, size_t n); // chips in {-1,+1}
double sum(const double* a, size_t n);
double sum_squares(const double* a, size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, size_t n);

// out[r*cols + c] = sum_s a[s*rows + r] * b[s*cols + c]   (a: n x rows, b: n x cols)
// The gradient-accumulation product: parallel over output tiles, samples in order.
void transpose_product(const double* a, const double* b, double* out, size_t n, size_t rows,
                       size_t cols);

// out[c] = sum_s a[s*cols + c]
void column_sums(const double* a, double* out, size_t n, size_t cols);

} // namespace blade::kernels
