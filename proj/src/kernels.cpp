#include "cmpose/kernels.h"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cmpose::kernels {

namespace {

std::atomic<bool> g_parallel{
#ifdef _OPENMP
    true
#else
    false
#endif
};

// Below this many fused multiply-adds the fork/join overhead dominates.
constexpr std::int64_t kMinFlops = 1 << 12;

bool use_par(std::int64_t work) {
    if (!g_parallel.load(std::memory_order_relaxed)) return false;
    if (work < kMinFlops) return false;
#ifdef _OPENMP
    return !omp_in_parallel();  // no nested regions
#else
    return false;
#endif
}

}  // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    const std::int64_t w = static_cast<std::int64_t>(m) * k * n;
    use_par(w) ? par::matmul_nn(a, b, c, m, k, n) : serial::matmul_nn(a, b, c, m, k, n);
}
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    const std::int64_t w = static_cast<std::int64_t>(m) * k * n;
    use_par(w) ? par::matmul_nn_acc(a, b, c, m, k, n) : serial::matmul_nn_acc(a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    const std::int64_t w = static_cast<std::int64_t>(m) * k * n;
    use_par(w) ? par::matmul_nt(a, b, c, m, k, n) : serial::matmul_nt(a, b, c, m, k, n);
}
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    const std::int64_t w = static_cast<std::int64_t>(m) * k * n;
    use_par(w) ? par::matmul_nt_acc(a, b, c, m, k, n) : serial::matmul_nt_acc(a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n) {
    const std::int64_t w = static_cast<std::int64_t>(r) * m * n;
    use_par(w) ? par::matmul_tn(a, b, c, r, m, n) : serial::matmul_tn(a, b, c, r, m, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n) {
    const std::int64_t w = static_cast<std::int64_t>(r) * m * n;
    use_par(w) ? par::matmul_tn_acc(a, b, c, r, m, n) : serial::matmul_tn_acc(a, b, c, r, m, n);
}
void softmax_rows(const double* x, double* y, int m, int n) {
    const std::int64_t w = static_cast<std::int64_t>(m) * n * 8;
    use_par(w) ? par::softmax_rows(x, y, m, n) : serial::softmax_rows(x, y, m, n);
}
void gelu(const double* x, double* y, std::int64_t n) {
    use_par(n * 16) ? par::gelu(x, y, n) : serial::gelu(x, y, n);
}
void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n) {
    use_par(n * 16) ? par::gelu_grad_acc(x, dy, dx, n) : serial::gelu_grad_acc(x, dy, dx, n);
}
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps) {
    const std::int64_t w = static_cast<std::int64_t>(m) * n * 8;
    use_par(w) ? par::layer_norm_rows(x, gain, bias, y, mean, rstd, m, n, eps)
               : serial::layer_norm_rows(x, gain, bias, y, mean, rstd, m, n, eps);
}
void add(const double* a, const double* b, double* y, std::int64_t n) {
    use_par(n * 2) ? par::add(a, b, y, n) : serial::add(a, b, y, n);
}
void sub(const double* a, const double* b, double* y, std::int64_t n) {
    use_par(n * 2) ? par::sub(a, b, y, n) : serial::sub(a, b, y, n);
}
void mul(const double* a, const double* b, double* y, std::int64_t n) {
    use_par(n * 2) ? par::mul(a, b, y, n) : serial::mul(a, b, y, n);
}
void axpy(double alpha, const double* x, double* y, std::int64_t n) {
    use_par(n * 2) ? par::axpy(alpha, x, y, n) : serial::axpy(alpha, x, y, n);
}

}  // namespace cmpose::kernels
