#include "blade/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace blade::ref {

double dot(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum(const double* a, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

double sum_squares(const double* a, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

void transpose_product(const double* a, const double* b, double* out, size_t n, size_t rows,
                       size_t cols) {
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += a[i * rows + r] * b[i * cols + c];
            out[r * cols + c] = s;
        }
}

void column_sums(const double* a, double* out, size_t n, size_t cols) {
    for (size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += a[i * cols + c];
        out[c] = s;
    }
}

double linear_softmax_grad(const double* features, const int* labels, size_t n_samples, int dims,
                           int classes, const double* weights, const double* bias, double* grad_w,
                           double* grad_b) {
    std::fill(grad_w, grad_w + static_cast<size_t>(dims) * classes, 0.0);
    std::fill(grad_b, grad_b + classes, 0.0);
    std::vector<double> z(classes);
    double loss = 0.0;
    for (size_t s = 0; s < n_samples; ++s) {
        const double* x = features + s * dims;
        for (int k = 0; k < classes; ++k) {
            double acc = bias[k];
            const double* wk = weights + static_cast<size_t>(k) * dims;
            for (int j = 0; j < dims; ++j) acc += wk[j] * x[j];
            z[k] = acc;
        }
        double zmax = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < classes; ++k) zmax = std::max(zmax, z[k]);
        double denom = 0.0;
        for (int k = 0; k < classes; ++k) {
            z[k] = std::exp(z[k] - zmax);
            denom += z[k];
        }
        for (int k = 0; k < classes; ++k) z[k] /= denom;
        loss += -std::log(std::max(z[labels[s]], 1e-300));
        for (int k = 0; k < classes; ++k) {
            const double delta = z[k] - (k == labels[s] ? 1.0 : 0.0);
            grad_b[k] += delta;
            double* gwk = grad_w + static_cast<size_t>(k) * dims;
            for (int j = 0; j < dims; ++j) gwk[j] += delta * x[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    for (size_t i = 0; i < static_cast<size_t>(dims) * classes; ++i) grad_w[i] *= inv;
    for (int k = 0; k < classes; ++k) grad_b[k] *= inv;
    return loss * inv;
}

} // namespace blade::ref
