#include "polygen/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace polygen {

namespace {

constexpr long long kRowParallelWork = 1 << 16;

}  // namespace

namespace kernels {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  Eigen::Map<Mat, 0, Stride> cm(c, m, n, Stride(ldc));
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (m == 0 || n == 0 || k == 0) return;
  Eigen::Map<const Mat, 0, Stride> am(a, trans_a ? k : m, trans_a ? m : k, Stride(lda));
  Eigen::Map<const Mat, 0, Stride> bm(b, trans_b ? n : k, trans_b ? k : n, Stride(ldb));
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * am * bm;
  } else if (!trans_a) {
    cm.noalias() += alpha * am * bm.transpose();
  } else if (!trans_b) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld) {
  const bool wide = static_cast<long long>(rows) * cols >= kRowParallelWork;
#pragma omp parallel for if (wide) schedule(static)
  for (int r = 0; r < rows; ++r) {
    T* p = x + static_cast<std::size_t>(r) * ld;
    const T mx = *std::max_element(p, p + cols);
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(p, p + cols, T(0));
      continue;
    }
    T sum = 0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(p[c] - mx);
      sum += p[c];
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < cols; ++c) p[c] *= inv;
  }
}

template <typename T>
void layer_norm_rows(const T* x, int rows, int cols, const T* gain, const T* bias, T eps, T* y,
                     T* xhat, T* rstd) {
  const bool wide = static_cast<long long>(rows) * cols >= kRowParallelWork;
#pragma omp parallel for if (wide) schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * cols;
    T* yr = y + static_cast<std::size_t>(r) * cols;
    T mean = 0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    T var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= cols;
    const T inv = T(1) / std::sqrt(var + eps);
    if (rstd != nullptr) rstd[r] = inv;
    T* hr = xhat != nullptr ? xhat + static_cast<std::size_t>(r) * cols : nullptr;
    for (int c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) * inv;
      if (hr != nullptr) hr[c] = h;
      yr[c] = h * gain[c] + bias[c];
    }
  }
}

template void gemm<float>(bool, bool, int, int, int, float, const float*, int, const float*, int,
                          float, float*, int);
template void gemm<double>(bool, bool, int, int, int, double, const double*, int, const double*,
                           int, double, double*, int);
template void softmax_rows<float>(float*, int, int, int);
template void softmax_rows<double>(double*, int, int, int);
template void layer_norm_rows<float>(const float*, int, int, const float*, const float*, float,
                                     float*, float*, float*);
template void layer_norm_rows<double>(const double*, int, int, const double*, const double*,
                                      double, double*, double*, double*);

}  // namespace kernels

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                             : a[static_cast<std::size_t>(i) * lda + p];
        const T bv = trans_b ? b[static_cast<std::size_t>(j) * ldb + p]
                             : b[static_cast<std::size_t>(p) * ldb + j];
        acc += av * bv;
      }
      T& out = c[static_cast<std::size_t>(i) * ldc + j];
      out = alpha * acc + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

template <typename T>
void softmax_rows(T* x, int rows, int cols, int ld) {
  for (int r = 0; r < rows; ++r) {
    T* p = x + static_cast<std::size_t>(r) * ld;
    T mx = -std::numeric_limits<T>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, p[c]);
    if (mx == -std::numeric_limits<T>::infinity()) {
      for (int c = 0; c < cols; ++c) p[c] = 0;
      continue;
    }
    T sum = 0;
    for (int c = 0; c < cols; ++c) sum += std::exp(p[c] - mx);
    for (int c = 0; c < cols; ++c) p[c] = std::exp(p[c] - mx) / sum;
  }
}

template <typename T>
void layer_norm_rows(const T* x, int rows, int cols, const T* gain, const T* bias, T eps, T* y,
                     T* xhat, T* rstd) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * cols;
    T mean = 0;
    for (int c = 0; c < cols; ++c) mean += xr[c] / cols;
    T var = 0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean) / cols;
    const T sd = std::sqrt(var + eps);
    if (rstd != nullptr) rstd[r] = 1 / sd;
    for (int c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) / sd;
      if (xhat != nullptr) xhat[static_cast<std::size_t>(r) * cols + c] = h;
      y[static_cast<std::size_t>(r) * cols + c] = h * gain[c] + bias[c];
    }
  }
}

template void gemm<float>(bool, bool, int, int, int, float, const float*, int, const float*, int,
                          float, float*, int);
template void gemm<double>(bool, bool, int, int, int, double, const double*, int, const double*,
                           int, double, double*, int);
template void softmax_rows<float>(float*, int, int, int);
template void softmax_rows<double>(double*, int, int, int);
template void layer_norm_rows<float>(const float*, int, int, const float*, const float*, float,
                                     float*, float*, float*);
template void layer_norm_rows<double>(const double*, int, int, const double*, const double*,
                                      double, double*, double*, double*);

}  // namespace reference

}  // namespace polygen
