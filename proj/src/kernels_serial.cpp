#include <cmath>

#include "cmpose/kernels.h"

// Reference kernels. Loop orders are chosen so the inner loop streams
// contiguous memory and auto-vectorizes; the per-element accumulation order
// (ascending k / ascending r) is the contract the parallel versions must
// reproduce exactly.

namespace cmpose::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::int64_t>(i) * k;
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0;
        for (int p = 0; p < r; ++p) {
            const double api = a[static_cast<std::int64_t>(p) * m + i];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < r; ++p) {
            const double api = a[static_cast<std::int64_t>(p) * m + i];
            const double* bp = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void softmax_rows(const double* x, double* y, int m, int n) {
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
    for (std::int64_t i = 0; i < n; ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
}

void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps) {
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
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy(double alpha, const double* x, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace cmpose::kernels::serial
