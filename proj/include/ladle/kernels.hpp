#pragma once

#include <cstddef>
#include <cstdint>

namespace ladle::kernels {

// Dense math kernels. Every kernel exists twice: `serial::` is the plain
// reference implementation, `par::` the OpenMP version. Both walk each
// output element's reduction in the same order, so results are bitwise
// identical; tests in test_kernels.cpp hold the two variants to that.
//
// The unprefixed dispatchers pick `par::` unless the caller is already
// inside an OpenMP parallel region (training parallelizes over samples,
// at which point nested kernel teams would only add overhead) or
// parallel kernels are globally disabled.

// C (m x n) = A (m x k) * B (k x n) + beta * C
// C (m x n) = A (m x k) * B (n x k)^T + beta * C
// C (m x n) = A (k x m)^T * B (k x n) + beta * C
// lda/ldb/ldc are row strides, allowing column-block views.

namespace serial {
void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
// rows of X softmaxed into Y; mask (may be null) marks valid columns,
// masked columns get probability 0. A row with no valid column becomes 0.
void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy);
// dX += softmax backward through Y (the forward output)
void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx);
void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd);
// dX += ..., dgamma += ..., dbeta += ...
void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta);
void gelu(size_t n, const double* X, double* Y);
void gelu_bwd(size_t n, const double* X, const double* dY, double* dX);  // dX +=
void add(size_t n, const double* A, const double* B, double* Y);
void axpy(size_t n, double a, const double* X, double* Y);  // Y += a*X
void scale(size_t n, double a, const double* X, double* Y);
void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y);
void colsum_acc(size_t rows, size_t cols, const double* X, double* out);  // out += colsums
}  // namespace serial

namespace par {
void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy);
void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx);
void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd);
void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta);
void gelu(size_t n, const double* X, double* Y);
void gelu_bwd(size_t n, const double* X, const double* dY, double* dX);
void add(size_t n, const double* A, const double* B, double* Y);
void axpy(size_t n, double a, const double* X, double* Y);
void scale(size_t n, double a, const double* X, double* Y);
void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y);
void colsum_acc(size_t rows, size_t cols, const double* X, double* out);
}  // namespace par

void set_parallel_kernels(bool enabled);  // process-wide switch (benchmarks, tests)
bool parallel_kernels_active();           // false inside an enclosing omp region

void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc);
void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy);
void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx);
void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd);
void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta);
void gelu(size_t n, const double* X, double* Y);
void gelu_bwd(size_t n, const double* X, const double* dY, double* dX);
void add(size_t n, const double* A, const double* B, double* Y);
void axpy(size_t n, double a, const double* X, double* Y);
void scale(size_t n, double a, const double* X, double* Y);
void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y);
void colsum_acc(size_t rows, size_t cols, const double* X, double* out);

}  // namespace ladle::kernels
