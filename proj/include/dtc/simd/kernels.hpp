#pragma once

// Dense inner-loop kernels used by the transformer and the behavior-cloning
// network. Every kernel has a portable scalar reference implementation and,
// where the CPU supports it, a vectorized variant (AVX2+FMA on x86-64, NEON on
// AArch64). The variant is chosen once at startup; tests can pin a backend.
//
// Row-major layouts throughout:
//   X  : rows x in      W  : out x in      Y  : rows x out

#include <cstddef>
#include <string_view>

namespace dtc::simd {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);

/// Backend currently used by the dispatching entry points below.
Backend active_backend();

/// Pins the dispatch backend. Throws ContractViolation if `b` is unavailable.
void set_backend(Backend b);

/// Picks the best available backend (the startup default).
void reset_backend();

template <typename T>
struct KernelTable {
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // Y = X W^T (+ bias), bias may be null
  void (*gemm_nt)(const T* X, const T* W, const T* bias, T* Y, std::size_t rows,
                  std::size_t in, std::size_t out);
  // dX += dY W
  void (*gemm_nn_acc)(const T* dY, const T* W, T* dX, std::size_t rows, std::size_t out,
                      std::size_t in);
  // dW += dY^T X
  void (*gemm_tn_acc)(const T* dY, const T* X, T* dW, std::size_t rows, std::size_t out,
                      std::size_t in);
};

/// Kernel table of a specific backend; throws if unavailable.
template <typename T>
const KernelTable<T>& kernels_for(Backend b);
template <>
const KernelTable<double>& kernels_for<double>(Backend b);
template <>
const KernelTable<float>& kernels_for<float>(Backend b);

/// Kernel table of the active backend.
template <typename T>
const KernelTable<T>& kernels() {
  return kernels_for<T>(active_backend());
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  return kernels<T>().dot(x, y, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  kernels<T>().axpy(alpha, x, y, n);
}

template <typename T>
void gemm_nt(const T* X, const T* W, const T* bias, T* Y, std::size_t rows, std::size_t in,
             std::size_t out) {
  kernels<T>().gemm_nt(X, W, bias, Y, rows, in, out);
}

template <typename T>
void gemm_nn_acc(const T* dY, const T* W, T* dX, std::size_t rows, std::size_t out,
                 std::size_t in) {
  kernels<T>().gemm_nn_acc(dY, W, dX, rows, out, in);
}

template <typename T>
void gemm_tn_acc(const T* dY, const T* X, T* dW, std::size_t rows, std::size_t out,
                 std::size_t in) {
  kernels<T>().gemm_tn_acc(dY, X, dW, rows, out, in);
}

}  // namespace dtc::simd
