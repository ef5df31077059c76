#pragma once

#include <cstdint>

// Dense kernels behind the tape ops. Every kernel exists twice: a plain serial
// reference under kernels::serial and an OpenMP version under kernels::par.
// The two are written so that each output element is produced by the same
// accumulation order, which makes them bit-identical for any thread count;
// the tests assert exact equality and bench_kernels compares throughput.
// The unqualified functions dispatch: parallel when enabled, the work is big
// enough, and we are not already inside a parallel region.

namespace cmpose::kernels {

void set_parallel(bool on);
bool parallel_enabled();

// C(m,n) = A(m,k) B(k,n); *_acc accumulates into C instead of overwriting.
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n);
// C(m,n) = A(m,k) B(n,k)^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
// C(m,n) = A(r,m)^T B(r,n)
void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n);

// row-wise softmax with max subtraction, y may alias x
void softmax_rows(const double* x, double* y, int m, int n);

// exact GELU: 0.5 x (1 + erf(x / sqrt(2)))
void gelu(const double* x, double* y, std::int64_t n);
// dx += dy * gelu'(x)
void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n);

// per-row normalization with affine gain/bias of width n; mean/rstd (length m)
// are saved for the backward pass
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps);

// y = a + b, y = a - b, y = a * b (elementwise, length n)
void add(const double* a, const double* b, double* y, std::int64_t n);
void sub(const double* a, const double* b, double* y, std::int64_t n);
void mul(const double* a, const double* b, double* y, std::int64_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::int64_t n);

namespace serial {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n);
void softmax_rows(const double* x, double* y, int m, int n);
void gelu(const double* x, double* y, std::int64_t n);
void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps);
void add(const double* a, const double* b, double* y, std::int64_t n);
void sub(const double* a, const double* b, double* y, std::int64_t n);
void mul(const double* a, const double* b, double* y, std::int64_t n);
void axpy(double alpha, const double* x, double* y, std::int64_t n);
}  // namespace serial

namespace par {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int r, int m, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int r, int m, int n);
void softmax_rows(const double* x, double* y, int m, int n);
void gelu(const double* x, double* y, std::int64_t n);
void gelu_grad_acc(const double* x, const double* dy, double* dx, std::int64_t n);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* mean, double* rstd, int m, int n, double eps);
void add(const double* a, const double* b, double* y, std::int64_t n);
void sub(const double* a, const double* b, double* y, std::int64_t n);
void mul(const double* a, const double* b, double* y, std::int64_t n);
void axpy(double alpha, const double* x, double* y, std::int64_t n);
}  // namespace par

}  // namespace cmpose::kernels
