#pragma once

// Scalar reference kernels. Also used by the vector backends for tails.

#include <cstddef>

namespace dtc::simd::scalar {

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void gemm_nt(const T* X, const T* W, const T* bias, T* Y, std::size_t rows, std::size_t in,
             std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = X + r * in;
    T* y = Y + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      y[o] = dot(x, W + o * in, in) + (bias ? bias[o] : T(0));
    }
  }
}

template <typename T>
void gemm_nn_acc(const T* dY, const T* W, T* dX, std::size_t rows, std::size_t out,
                 std::size_t in) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      axpy(dY[r * out + o], W + o * in, dX + r * in, in);
    }
  }
}

template <typename T>
void gemm_tn_acc(const T* dY, const T* X, T* dW, std::size_t rows, std::size_t out,
                 std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t r = 0; r < rows; ++r) {
      axpy(dY[r * out + o], X + r * in, dW + o * in, in);
    }
  }
}

}  // namespace dtc::simd::scalar
