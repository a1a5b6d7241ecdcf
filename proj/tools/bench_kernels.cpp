// Times the serial reference kernels against the OpenMP versions on the
// shapes the default model actually runs, and reports effective MAC rates.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gridagent/nn/kernels.hpp"
#include "gridagent/rng.hpp"

using namespace gridagent;
using namespace gridagent::nn;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.next_double(-1, 1);
    return v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct BenchResult {
    double serial_s = 0;
    double parallel_s = 0;
};

template <typename F>
double time_loop(F&& fn, int iters) {
    fn();  // warm up
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    return seconds_since(t0) / iters;
}

void report(const char* name, double macs, const BenchResult& r) {
    printf("%-28s %10.3f ms serial (%6.2f GMAC/s) | %10.3f ms omp (%6.2f GMAC/s) | speedup %.2fx\n",
           name, 1e3 * r.serial_s, macs / r.serial_s * 1e-9, 1e3 * r.parallel_s,
           macs / r.parallel_s * 1e-9, r.serial_s / r.parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
    int threads = 4;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    if (argc > 1) threads = std::atoi(argv[1]);
    printf("comparing serial reference vs OpenMP kernels with %d threads\n\n", threads);

    Rng rng(42);
    const int iters = 50;

    {
        // first conv of the default visual encoder: 26 -> 32 channels, 28x28, stride 2
        const int C = 26, H = 28, W = 28, O = 32, k = 3, s = 2, p = 1;
        const int Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
        auto in = random_vec(static_cast<size_t>(C) * H * W, rng);
        auto w = random_vec(static_cast<size_t>(O) * C * k * k, rng);
        auto b = random_vec(O, rng);
        std::vector<double> out(static_cast<size_t>(O) * Ho * Wo);
        BenchResult r;
        kernels::set_threads(1);
        r.serial_s = time_loop(
            [&] {
                kernels::serial_ref::conv2d(in.data(), w.data(), b.data(), out.data(), C, H, W, O, k,
                                            s, p, Ho, Wo);
            },
            iters);
        kernels::set_threads(threads);
        r.parallel_s = time_loop(
            [&] {
                kernels::omp_par::conv2d(in.data(), w.data(), b.data(), out.data(), C, H, W, O, k, s,
                                         p, Ho, Wo);
            },
            iters);
        report("conv2d 26x28x28 -> 32x14x14", 1.0 * O * Ho * Wo * C * k * k, r);
    }

    {
        // decoder-sized matvec: 256x536
        const int m = 256, n = 536;
        auto W = random_vec(static_cast<size_t>(m) * n, rng);
        auto x = random_vec(n, rng);
        auto b = random_vec(m, rng);
        std::vector<double> y(m);
        BenchResult r;
        kernels::set_threads(1);
        r.serial_s = time_loop(
            [&] { kernels::serial_ref::matvec(W.data(), x.data(), b.data(), y.data(), m, n); },
            iters * 10);
        kernels::set_threads(threads);
        r.parallel_s = time_loop(
            [&] { kernels::omp_par::matvec(W.data(), x.data(), b.data(), y.data(), m, n); },
            iters * 10);
        report("matvec 256x536", 1.0 * m * n, r);
    }

    {
        // dynamic-filter bank application: 8 one-by-one kernels over 32x7x7
        const int C = 32, H = 7, W = 7, O = 8, k = 1;
        auto in = random_vec(static_cast<size_t>(C) * H * W, rng);
        auto w = random_vec(static_cast<size_t>(O) * C, rng);
        std::vector<double> out(static_cast<size_t>(O) * H * W);
        BenchResult r;
        kernels::set_threads(1);
        r.serial_s = time_loop(
            [&] {
                kernels::serial_ref::conv2d(in.data(), w.data(), nullptr, out.data(), C, H, W, O, k,
                                            1, 0, H, W);
            },
            iters * 10);
        kernels::set_threads(threads);
        r.parallel_s = time_loop(
            [&] {
                kernels::omp_par::conv2d(in.data(), w.data(), nullptr, out.data(), C, H, W, O, k, 1,
                                         0, H, W);
            },
            iters * 10);
        report("filter bank 8x(32x1x1) @7x7", 1.0 * O * H * W * C, r);
    }

    {
        // mask-head deconvolution: 16x7x7 -> 8x14x14
        const int C = 16, H = 7, W = 7, O = 8, k = 4, s = 2, p = 1;
        const int Ho = (H - 1) * s - 2 * p + k, Wo = (W - 1) * s - 2 * p + k;
        auto in = random_vec(static_cast<size_t>(C) * H * W, rng);
        auto w = random_vec(static_cast<size_t>(C) * O * k * k, rng);
        auto b = random_vec(O, rng);
        std::vector<double> out(static_cast<size_t>(O) * Ho * Wo);
        BenchResult r;
        kernels::set_threads(1);
        r.serial_s = time_loop(
            [&] {
                kernels::serial_ref::conv_transpose2d(in.data(), w.data(), b.data(), out.data(), C,
                                                      H, W, O, k, s, p, Ho, Wo);
            },
            iters);
        kernels::set_threads(threads);
        r.parallel_s = time_loop(
            [&] {
                kernels::omp_par::conv_transpose2d(in.data(), w.data(), b.data(), out.data(), C, H,
                                                   W, O, k, s, p, Ho, Wo);
            },
            iters);
        report("deconv 16x7x7 -> 8x14x14", 1.0 * C * H * W * O * k * k, r);
    }

    kernels::set_threads(1);
    return 0;
}
