#pragma once

#include <cstdint>

namespace msinet::kernels {

// OpenMP-parallel GEMM kernels. Each output element is accumulated by exactly
// one thread in ascending-k order, so results are bitwise identical for any
// thread count.

// c[M,N] = a[M,K] * b[K,N]
void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// c[M,N] = a[M,K] * b[N,K]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// c[M,N] = a[K,M]^T * b[K,N]
void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// Serial reference GEMM (plain triple loop); kept for the kernel benchmark.
void matmul_serial(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n);

// Unfolds an NCHW batch into a [C*kh*kw, N*OH*OW] patch matrix with zero
// padding. Column order is (n, oh, ow).
void im2col(const double* x, int64_t n, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
            int64_t pw, double* cols);

// Adjoint of im2col: scatter-adds patch-matrix gradients back into an NCHW
// gradient buffer (caller zero-fills dx).
void col2im(const double* cols, int64_t n, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
            int64_t pw, double* dx);

// Caps OpenMP worker threads; n <= 0 leaves the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace msinet::kernels
