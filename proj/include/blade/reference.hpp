#pragma once
#include <cstddef>
#include <cstdint>
#include <vector>

// Naive single-threaded reference implementations of the parallel kernels.
// Kept for tests (equivalence checks) and for blade-bench (speedup baseline).
// Do not use from the simulator path.

namespace blade::ref {

double dot(const double* a, const double* b, size_t n);
double sum(const double* a, size_t n);
double sum_squares(const double* a, size_t n);
void transpose_product(const double* a, const double* b, double* out, size_t n, size_t rows,
                       size_t cols);
void column_sums(const double* a, double* out, size_t n, size_t cols);

// One full-batch softmax cross-entropy gradient pass over a linear model,
// written the straightforward per-sample way. Returns mean loss.
double linear_softmax_grad(const double* features, const int* labels, size_t n_samples, int dims,
                           int classes, const double* weights, const double* bias, double* grad_w,
                           double* grad_b);

} // namespace blade::ref
