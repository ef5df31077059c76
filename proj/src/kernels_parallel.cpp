#include <cmath>

#include "cmpose/kernels.h"

// OpenMP kernels, also the tuned production path. The matmuls process four
// output rows per iteration so each streamed row/column of the other factor
// is reused from registers. Work is split across whole output elements and
// each element keeps the reference accumulation order (ascending k / r), so
// results are bit-identical to kernels::serial for any OMP_NUM_THREADS.
// Static schedule keeps the split itself deterministic.

namespace cmpose::kernels::par {

namespace {

template <bool kAccumulate>
void matmul_nn_impl(const double* a, const double* b, double* c, int m, int k, int n) {
    const int m4 = m / 4 * 4;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m4; i += 4) {
        double* c0 = c + static_cast<std::int64_t>(i) * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        if (!kAccumulate)
            for (int j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = 0.0;
        const double* a0 = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                const double bj = bp[j];
                c0[j] += x0 * bj;
                c1[j] += x1 * bj;
                c2[j] += x2 * bj;
                c3[j] += x3 * bj;
            }
        }
    }
    for (int i = m4; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        if (!kAccumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

template <bool kAccumulate>
void matmul_nt_impl(const double* a, const double* b, double* c, int m, int k, int n) {
    const int m4 = m / 4 * 4;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m4; i += 4) {
        const double* a0 = a + static_cast<std::int64_t>(i) * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::int64_t>(j) * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (int p = 0; p < k; ++p) {
                const double bp = bj[p];
                s0 += a0[p] * bp;
                s1 += a1[p] * bp;
                s2 += a2[p] * bp;
                s3 += a3[p] * bp;
            }
            if (kAccumulate) {
                ci[j] += s0;
                ci[n + j] += s1;
                ci[2 * n + j] += s2;
                ci[3 * n + j] += s3;
            } else {
                ci[j] = s0;
                ci[n + j] = s1;
                ci[2 * n + j] = s2;
                ci[3 * n + j] = s3;
            }
        }
    }
    for (int i = m4; i < m; ++i) {
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            if (kAccumulate)
                ci[j] += acc;
            else
                ci[j] = acc;
        }
    }
}

template <bool kAccumulate>
void matmul_tn_impl(const double* a, const double* b, double* c, int r, int m, int n) {
    const int m4 = m / 4 * 4;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m4; i += 4) {
        double* c0 = c + static_cast<std::int64_t>(i) * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        if (!kAccumulate)
            for (int j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = 0.0;
        for (int p = 0; p < r; ++p) {
            const double* ap = a + static_cast<std::int64_t>(p) * m + i;
            const double x0 = ap[0], x1 = ap[1], x2 = ap[2], x3 = ap[3];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                const double bj = bp[j];
                c0[j] += x0 * bj;
                c1[j] += x1 * bj;
                c2[j] += x2 * bj;
                c3[j] += x3 * bj;
            }
        }
    }
    for (int i = m4; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        if (!kAccumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        for (int p = 0; p < r; ++p) {
            const double api = a[static_cast<std::int64_t>(p) * m + i];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    matmul_nn_impl<false>(a, b, c, m, k, n);
}
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    matmul_nn_impl<true>(a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    matmul_nt_impl<false>(a, b, c, m, k, n);
}
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    matmul_nt_impl<true>(a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n) {
    matmul_tn_impl<false>(a, b, c, r, m, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n) {
    matmul_tn_impl<true>(a, b, c, r, m, n);
}

void softmax_rows(const double* x, double* y, int m, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* xi = x + static_cast<std::int64_t>(i) * n;
        double* yi = y + static_cast<std::int64_t>(i) * n;
        double mx = xi[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j) yi[j] *= inv;
    }
}

void gelu(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
}

void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* xi = x + static_cast<std::int64_t>(i) * n;
        double* yi = y + static_cast<std::int64_t>(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xi[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xi[j] - mu;
            var += d * d;
        }
        var /= n;
        const double rs = 1.0 / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;
        for (int j = 0; j < n; ++j) yi[j] = (xi[j] - mu) * rs * gain[j] + bias[j];
    }
}

void add(const double* a, const double* b, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy(double alpha, const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace cmpose::kernels::par
