#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "blade/kernels.hpp"
#include "blade/reference.hpp"
#include "blade/rng.hpp"

// Times each parallel kernel against its serial reference at 1 thread and at
// the full thread count, and cross-checks the numeric results while at it.
// Reductions are blocked, so 1-thread and N-thread runs must agree bitwise.

namespace {

using blade::Rng;
namespace kern = blade::kernels;
namespace ref = blade::ref;

std::vector<double> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

template <typename F>
double best_ms(F&& f, int reps = 5) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const double t0 = omp_get_wtime();
        f();
        best = std::min(best, (omp_get_wtime() - t0) * 1e3);
    }
    return best;
}

bool close(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
    return std::fabs(a - b) <= 1e-9 * scale;
}

bool close_vec(const std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i)
        if (!close(a[i], b[i])) return false;
    return true;
}

struct Row {
    const char* kernel;
    size_t n;
    double ref_ms, one_ms, all_ms;
    bool match, threads_agree;
};

void print(const Row& r) {
    std::printf("%-18s %9zu  %8.3f  %8.3f  %8.3f  %6.2fx  %s\n", r.kernel, r.n, r.ref_ms,
                r.one_ms, r.all_ms, r.all_ms > 0 ? r.ref_ms / r.all_ms : 0.0,
                r.match && r.threads_agree ? "ok" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    size_t n = 1 << 22;
    if (argc > 1) n = std::strtoull(argv[1], nullptr, 10);
    const int max_t = kern::max_threads();
    std::printf("# blade-bench: serial reference vs parallel kernels (max threads %d)\n", max_t);
    std::printf("%-18s %9s  %8s  %8s  %8s  %7s  %s\n", "kernel", "n", "ref_ms", "1thr_ms",
                "all_ms", "speedup", "check");

    const auto a = random_vec(n, 11);
    const auto b = random_vec(n, 12);
    bool all_ok = true;

    auto bench_scalar = [&](const char* name, auto ref_fn, auto par_fn) {
        Row r{name, n, 0, 0, 0, false, false};
        double vr = 0, v1 = 0, vn = 0;
        r.ref_ms = best_ms([&] { vr = ref_fn(); });
        kern::set_threads(1);
        r.one_ms = best_ms([&] { v1 = par_fn(); });
        kern::set_threads(0);
        r.all_ms = best_ms([&] { vn = par_fn(); });
        r.match = close(vr, vn);
        r.threads_agree = v1 == vn; // blocked reduction: bitwise equal
        print(r);
        all_ok &= r.match && r.threads_agree;
    };

    bench_scalar(
        "dot", [&] { return ref::dot(a.data(), b.data(), n); },
        [&] { return kern::dot(a.data(), b.data(), n); });
    bench_scalar(
        "sum", [&] { return ref::sum(a.data(), n); },
        [&] { return kern::sum(a.data(), n); });
    bench_scalar(
        "sum_squares", [&] { return ref::sum_squares(a.data(), n); },
        [&] { return kern::sum_squares(a.data(), n); });

    // gradient-shaped matrix products
    const size_t samples = 1 << 14, rows = 128, cols = 64;
    const auto ma = random_vec(samples * rows, 21);
    const auto mb = random_vec(samples * cols, 22);
    std::vector<double> out_ref(rows * cols), out_one(rows * cols), out_all(rows * cols);
    {
        Row r{"transpose_product", samples, 0, 0, 0, false, false};
        r.ref_ms = best_ms(
            [&] { ref::transpose_product(ma.data(), mb.data(), out_ref.data(), samples, rows, cols); });
        kern::set_threads(1);
        r.one_ms = best_ms(
            [&] { kern::transpose_product(ma.data(), mb.data(), out_one.data(), samples, rows, cols); });
        kern::set_threads(0);
        r.all_ms = best_ms(
            [&] { kern::transpose_product(ma.data(), mb.data(), out_all.data(), samples, rows, cols); });
        r.match = close_vec(out_ref, out_all);
        r.threads_agree = out_one == out_all;
        print(r);
        all_ok &= r.match && r.threads_agree;
    }
    {
        std::vector<double> cs_ref(cols), cs_one(cols), cs_all(cols);
        Row r{"column_sums", samples, 0, 0, 0, false, false};
        r.ref_ms = best_ms([&] { ref::column_sums(mb.data(), cs_ref.data(), samples, cols); });
        kern::set_threads(1);
        r.one_ms = best_ms([&] { kern::column_sums(mb.data(), cs_one.data(), samples, cols); });
        kern::set_threads(0);
        r.all_ms = best_ms([&] { kern::column_sums(mb.data(), cs_all.data(), samples, cols); });
        r.match = close_vec(cs_ref, cs_all);
        r.threads_agree = cs_one == cs_all;
        print(r);
        all_ok &= r.match && r.threads_agree;
    }

    if (!all_ok) {
        std::fprintf(stderr, "kernel results disagree with the reference\n");
        return 1;
    }
    return 0;
}
