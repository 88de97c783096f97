#pragma once

// Dense kernels used by the autodiff graph and the inference path. The
// kernels:: versions are the fast ones (Eigen GEMM, OpenMP over rows when the
// problem is large and we are not already inside a parallel region); the
// reference:: versions are plain serial loops kept for tests and benchmarks.

namespace polygen {

namespace kernels {

/// C = alpha * op(A) * op(B) + beta * C, all row-major with leading dims.
/// op(A) is m x k, op(B) is k x n. beta == 0 ignores the old contents of C.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

/// In-place row softmax over `cols` entries of each of `rows` rows.
/// -inf entries get probability 0; a row of all -inf is left as zeros.
template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld);

/// y = (x - mean) / sqrt(var + eps) * gain + bias per row. Writes the
/// normalized values and inverse deviations if the pointers are non-null.
template <typename T>
void layer_norm_rows(const T* x, int rows, int cols, const T* gain, const T* bias, T eps, T* y,
                     T* xhat, T* rstd);

}  // namespace kernels

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld);

template <typename T>
void layer_norm_rows(const T* x, int rows, int cols, const T* gain, const T* bias, T eps, T* y,
                     T* xhat, T* rstd);

}  // namespace reference

}  // namespace polygen
