#include "ladle/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ladle::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline void gemm_nn_row(size_t i, size_t n, size_t k, const double* A, size_t lda,
                        const double* B, size_t ldb, double beta, double* C, size_t ldc) {
    double* ci = C + i * ldc;
    if (beta == 0.0)
        for (size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = A + i * lda;
    for (size_t l = 0; l < k; ++l) {
        const double a = ai[l];
        const double* bl = B + l * ldb;
        for (size_t j = 0; j < n; ++j) ci[j] += a * bl[j];
    }
}

inline void gemm_nt_row(size_t i, size_t n, size_t k, const double* A, size_t lda,
                        const double* B, size_t ldb, double beta, double* C, size_t ldc) {
    const double* ai = A + i * lda;
    double* ci = C + i * ldc;
    for (size_t j = 0; j < n; ++j) {
        const double* bj = B + j * ldb;
        double s = 0.0;
        for (size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
        ci[j] = (beta == 0.0) ? s : ci[j] + s;
    }
}

// C(i,j) = sum_l A(l,i) * B(l,j); A walked down its column i
inline void gemm_tn_row(size_t i, size_t n, size_t k, const double* A, size_t lda,
                        const double* B, size_t ldb, double beta, double* C, size_t ldc) {
    double* ci = C + i * ldc;
    if (beta == 0.0)
        for (size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (size_t l = 0; l < k; ++l) {
        const double a = A[l * lda + i];
        const double* bl = B + l * ldb;
        for (size_t j = 0; j < n; ++j) ci[j] += a * bl[j];
    }
}

inline void softmax_row(size_t cols, const double* x, const uint8_t* mask, double* y) {
    double mx = -HUGE_VAL;
    for (size_t j = 0; j < cols; ++j)
        if (!mask || mask[j])
            if (x[j] > mx) mx = x[j];
    if (mx == -HUGE_VAL) {  // no valid column
        for (size_t j = 0; j < cols; ++j) y[j] = 0.0;
        return;
    }
    double sum = 0.0;
    for (size_t j = 0; j < cols; ++j) {
        double e = (!mask || mask[j]) ? std::exp(x[j] - mx) : 0.0;
        y[j] = e;
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void softmax_row_bwd(size_t cols, const double* y, const double* dy, double* dx) {
    double s = 0.0;
    for (size_t j = 0; j < cols; ++j) s += dy[j] * y[j];
    for (size_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - s);
}

inline void layer_norm_row(size_t cols, const double* x, const double* gamma, const double* beta,
                           double eps, double* y, double* mean_out, double* rstd_out) {
    double mu = 0.0;
    for (size_t j = 0; j < cols; ++j) mu += x[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (size_t j = 0; j < cols; ++j) {
        double c = x[j] - mu;
        var += c * c;
    }
    var /= static_cast<double>(cols);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rstd * gamma[j] + beta[j];
    *mean_out = mu;
    *rstd_out = rstd;
}

inline void layer_norm_row_bwd_dx(size_t cols, const double* x, const double* gamma, double mean,
                                  double rstd, const double* dy, double* dx) {
    const double n = static_cast<double>(cols);
    double sg = 0.0, sgx = 0.0;
    for (size_t j = 0; j < cols; ++j) {
        const double xh = (x[j] - mean) * rstd;
        const double g = dy[j] * gamma[j];
        sg += g;
        sgx += g * xh;
    }
    sg /= n;
    sgx /= n;
    for (size_t j = 0; j < cols; ++j) {
        const double xh = (x[j] - mean) * rstd;
        const double g = dy[j] * gamma[j];
        dx[j] += rstd * (g - sg - xh * sgx);
    }
}

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad_one(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

std::atomic<bool> g_parallel{true};

}  // namespace

void set_parallel_kernels(bool enabled) { g_parallel.store(enabled); }

bool parallel_kernels_active() {
#ifdef _OPENMP
    return g_parallel.load() && omp_in_parallel() == 0;
#else
    return false;
#endif
}

// ---------------------------------------------------------------- serial

namespace serial {

void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    for (size_t i = 0; i < m; ++i) gemm_nn_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    for (size_t i = 0; i < m; ++i) gemm_nt_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    for (size_t i = 0; i < m; ++i) gemm_tn_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy) {
    for (size_t i = 0; i < rows; ++i) softmax_row(cols, X + i * ldx, mask, Y + i * ldy);
}

void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx) {
    for (size_t i = 0; i < rows; ++i)
        softmax_row_bwd(cols, Y + i * ldy, dY + i * lddy, dX + i * lddx);
}

void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd) {
    for (size_t i = 0; i < rows; ++i)
        layer_norm_row(cols, X + i * cols, gamma, beta, eps, Y + i * cols, mean + i, rstd + i);
}

void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta) {
    for (size_t i = 0; i < rows; ++i)
        layer_norm_row_bwd_dx(cols, X + i * cols, gamma, mean[i], rstd[i], dY + i * cols,
                              dX + i * cols);
    // parameter grads reduced in row order
    for (size_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        const double* dy = dY + i * cols;
        for (size_t j = 0; j < cols; ++j) {
            const double xh = (x[j] - mean[i]) * rstd[i];
            dgamma[j] += dy[j] * xh;
            dbeta[j] += dy[j];
        }
    }
}

void gelu(size_t n, const double* X, double* Y) {
    for (size_t i = 0; i < n; ++i) Y[i] = gelu_one(X[i]);
}

void gelu_bwd(size_t n, const double* X, const double* dY, double* dX) {
    for (size_t i = 0; i < n; ++i) dX[i] += dY[i] * gelu_grad_one(X[i]);
}

void add(size_t n, const double* A, const double* B, double* Y) {
    for (size_t i = 0; i < n; ++i) Y[i] = A[i] + B[i];
}

void axpy(size_t n, double a, const double* X, double* Y) {
    for (size_t i = 0; i < n; ++i) Y[i] += a * X[i];
}

void scale(size_t n, double a, const double* X, double* Y) {
    for (size_t i = 0; i < n; ++i) Y[i] = a * X[i];
}

void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y) {
    for (size_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        double* y = Y + i * cols;
        for (size_t j = 0; j < cols; ++j) y[j] = x[j] + v[j];
    }
}

void colsum_acc(size_t rows, size_t cols, const double* X, double* out) {
    for (size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < rows; ++i) s += X[i * cols + j];
        out[j] += s;
    }
}

}  // namespace serial

// ---------------------------------------------------------------- OpenMP

namespace par {

void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) gemm_nn_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) gemm_nt_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < m; ++i) gemm_tn_row(i, n, k, A, lda, B, ldb, beta, C, ldc);
}

void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i) softmax_row(cols, X + i * ldx, mask, Y + i * ldy);
}

void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        softmax_row_bwd(cols, Y + i * ldy, dY + i * lddy, dX + i * lddx);
}

void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        layer_norm_row(cols, X + i * cols, gamma, beta, eps, Y + i * cols, mean + i, rstd + i);
}

void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i)
        layer_norm_row_bwd_dx(cols, X + i * cols, gamma, mean[i], rstd[i], dY + i * cols,
                              dX + i * cols);
    // dgamma/dbeta stay serial so the row reduction order matches serial::
    for (size_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        const double* dy = dY + i * cols;
        for (size_t j = 0; j < cols; ++j) {
            const double xh = (x[j] - mean[i]) * rstd[i];
            dgamma[j] += dy[j] * xh;
            dbeta[j] += dy[j];
        }
    }
}

void gelu(size_t n, const double* X, double* Y) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) Y[i] = gelu_one(X[i]);
}

void gelu_bwd(size_t n, const double* X, const double* dY, double* dX) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) dX[i] += dY[i] * gelu_grad_one(X[i]);
}

void add(size_t n, const double* A, const double* B, double* Y) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) Y[i] = A[i] + B[i];
}

void axpy(size_t n, double a, const double* X, double* Y) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) Y[i] += a * X[i];
}

void scale(size_t n, double a, const double* X, double* Y) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < n; ++i) Y[i] = a * X[i];
}

void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y) {
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < rows; ++i) {
        const double* x = X + i * cols;
        double* y = Y + i * cols;
        for (size_t j = 0; j < cols; ++j) y[j] = x[j] + v[j];
    }
}

void colsum_acc(size_t rows, size_t cols, const double* X, double* out) {
#pragma omp parallel for schedule(static)
    for (size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < rows; ++i) s += X[i * cols + j];
        out[j] += s;
    }
}

}  // namespace par

// ------------------------------------------------------------- dispatch

#define LADLE_DISPATCH(fn, ...)                \
    if (parallel_kernels_active())             \
        par::fn(__VA_ARGS__);                  \
    else                                       \
        serial::fn(__VA_ARGS__)

void gemm_nn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    LADLE_DISPATCH(gemm_nn, m, n, k, A, lda, B, ldb, beta, C, ldc);
}
void gemm_nt(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    LADLE_DISPATCH(gemm_nt, m, n, k, A, lda, B, ldb, beta, C, ldc);
}
void gemm_tn(size_t m, size_t n, size_t k, const double* A, size_t lda, const double* B,
             size_t ldb, double beta, double* C, size_t ldc) {
    LADLE_DISPATCH(gemm_tn, m, n, k, A, lda, B, ldb, beta, C, ldc);
}
void softmax_rows(size_t rows, size_t cols, const double* X, size_t ldx, const uint8_t* mask,
                  double* Y, size_t ldy) {
    LADLE_DISPATCH(softmax_rows, rows, cols, X, ldx, mask, Y, ldy);
}
void softmax_rows_bwd(size_t rows, size_t cols, const double* Y, size_t ldy, const double* dY,
                      size_t lddy, double* dX, size_t lddx) {
    LADLE_DISPATCH(softmax_rows_bwd, rows, cols, Y, ldy, dY, lddy, dX, lddx);
}
void layer_norm(size_t rows, size_t cols, const double* X, const double* gamma,
                const double* beta, double eps, double* Y, double* mean, double* rstd) {
    LADLE_DISPATCH(layer_norm, rows, cols, X, gamma, beta, eps, Y, mean, rstd);
}
void layer_norm_bwd(size_t rows, size_t cols, const double* X, const double* gamma,
                    const double* mean, const double* rstd, const double* dY, double* dX,
                    double* dgamma, double* dbeta) {
    LADLE_DISPATCH(layer_norm_bwd, rows, cols, X, gamma, mean, rstd, dY, dX, dgamma, dbeta);
}
void gelu(size_t n, const double* X, double* Y) { LADLE_DISPATCH(gelu, n, X, Y); }
void gelu_bwd(size_t n, const double* X, const double* dY, double* dX) {
    LADLE_DISPATCH(gelu_bwd, n, X, dY, dX);
}
void add(size_t n, const double* A, const double* B, double* Y) {
    LADLE_DISPATCH(add, n, A, B, Y);
}
void axpy(size_t n, double a, const double* X, double* Y) { LADLE_DISPATCH(axpy, n, a, X, Y); }
void scale(size_t n, double a, const double* X, double* Y) { LADLE_DISPATCH(scale, n, a, X, Y); }
void add_rowvec(size_t rows, size_t cols, const double* X, const double* v, double* Y) {
    LADLE_DISPATCH(add_rowvec, rows, cols, X, v, Y);
}
void colsum_acc(size_t rows, size_t cols, const double* X, double* out) {
    LADLE_DISPATCH(colsum_acc, rows, cols, X, out);
}

#undef LADLE_DISPATCH

}  // namespace ladle::kernels
