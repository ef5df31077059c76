// Timing comparison between the serial reference kernels and the OpenMP
// versions at the shapes the pipeline actually runs, plus a few larger
// shapes where the parallel split has room to work.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cmpose/kernels.h"
#include "cmpose/rng.h"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cmpose;
namespace K = cmpose::kernels;

namespace {

using Clock = std::chrono::steady_clock;

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

std::vector<double> rand_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

void bench_matmul(int m, int k, int n, Rng& rng) {
    auto a = rand_vec(static_cast<size_t>(m) * k, rng);
    auto b = rand_vec(static_cast<size_t>(k) * n, rng);
    std::vector<double> c(static_cast<size_t>(m) * n);
    const double flops = 2.0 * m * k * n;
    const int reps = std::max(1, static_cast<int>(2e8 / flops));
    const double ts = time_of([&] { K::serial::matmul_nn(a.data(), b.data(), c.data(), m, k, n); }, reps);
    const double tp = time_of([&] { K::par::matmul_nn(a.data(), b.data(), c.data(), m, k, n); }, reps);
    std::printf("matmul %4dx%4dx%4d  serial %8.3f us (%6.2f GF/s)  omp %8.3f us (%6.2f GF/s)  speedup %.2fx\n",
                m, k, n, ts * 1e6, flops / ts * 1e-9, tp * 1e6, flops / tp * 1e-9, ts / tp);
}

void bench_rows(const char* name, int m, int n, Rng& rng,
                const std::function<void(const double*, double*, int, int)>& serial,
                const std::function<void(const double*, double*, int, int)>& par) {
    auto x = rand_vec(static_cast<size_t>(m) * n, rng);
    std::vector<double> y(x.size());
    const int reps = std::max(1, static_cast<int>(5e7 / x.size()));
    const double ts = time_of([&] { serial(x.data(), y.data(), m, n); }, reps);
    const double tp = time_of([&] { par(x.data(), y.data(), m, n); }, reps);
    std::printf("%-18s %5dx%-5d serial %8.3f us  omp %8.3f us  speedup %.2fx\n", name, m, n,
                ts * 1e6, tp * 1e6, ts / tp);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP max threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP\n");
#endif
    Rng rng(42, RngStream::test);

    // pipeline shapes (desk config): qkv projections, attention, head MLP
    bench_matmul(189, 64, 192, rng);
    bench_matmul(63, 16, 63, rng);
    bench_matmul(189, 128, 64, rng);
    bench_matmul(15, 128, 3072, rng);
    // larger shapes where threading pays off
    bench_matmul(512, 512, 512, rng);
    bench_matmul(1024, 1024, 1024, rng);

    bench_rows("softmax_rows", 189, 189, rng,
               [](const double* x, double* y, int m, int n) { K::serial::softmax_rows(x, y, m, n); },
               [](const double* x, double* y, int m, int n) { K::par::softmax_rows(x, y, m, n); });
    bench_rows("softmax_rows", 4096, 512, rng,
               [](const double* x, double* y, int m, int n) { K::serial::softmax_rows(x, y, m, n); },
               [](const double* x, double* y, int m, int n) { K::par::softmax_rows(x, y, m, n); });
    bench_rows("gelu", 1024, 1024, rng,
               [](const double* x, double* y, int m, int n) {
                   K::serial::gelu(x, y, static_cast<std::int64_t>(m) * n);
               },
               [](const double* x, double* y, int m, int n) {
                   K::par::gelu(x, y, static_cast<std::int64_t>(m) * n);
               });
    return 0;
}
