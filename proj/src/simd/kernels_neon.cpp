// NEON variants for AArch64, where Advanced SIMD is part of the base ISA.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstddef>

#include "dtc/simd/kernels.hpp"
#include "kernels_scalar.hpp"

namespace dtc::simd::neon {
namespace {

struct F64 {
  using T = double;
  using V = float64x2_t;
  static constexpr std::size_t kLanes = 2;
  static V zero() { return vdupq_n_f64(0.0); }
  static V load(const T* p) { return vld1q_f64(p); }
  static void store(T* p, V v) { vst1q_f64(p, v); }
  static V set1(T x) { return vdupq_n_f64(x); }
  static V fma(V a, V b, V c) { return vfmaq_f64(c, a, b); }
  static V add(V a, V b) { return vaddq_f64(a, b); }
  static T hsum(V v) { return vaddvq_f64(v); }
};

struct F32 {
  using T = float;
  using V = float32x4_t;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return vdupq_n_f32(0.0f); }
  static V load(const T* p) { return vld1q_f32(p); }
  static void store(T* p, V v) { vst1q_f32(p, v); }
  static V set1(T x) { return vdupq_n_f32(x); }
  static V fma(V a, V b, V c) { return vfmaq_f32(c, a, b); }
  static V add(V a, V b) { return vaddq_f32(a, b); }
  static T hsum(V v) { return vaddvq_f32(v); }
};

template <typename L>
typename L::T dot(const typename L::T* x, const typename L::T* y, std::size_t n) {
  constexpr std::size_t W = L::kLanes;
  auto a0 = L::zero(), a1 = L::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    a0 = L::fma(L::load(x + i), L::load(y + i), a0);
    a1 = L::fma(L::load(x + i + W), L::load(y + i + W), a1);
  }
  for (; i + W <= n; i += W) a0 = L::fma(L::load(x + i), L::load(y + i), a0);
  auto acc = L::hsum(L::add(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename L>
void axpy(typename L::T alpha, const typename L::T* x, typename L::T* y, std::size_t n) {
  constexpr std::size_t W = L::kLanes;
  const auto va = L::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) L::store(y + i, L::fma(va, L::load(x + i), L::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename L>
void gemm_nt(const typename L::T* X, const typename L::T* Wt, const typename L::T* bias,
             typename L::T* Y, std::size_t rows, std::size_t in, std::size_t out) {
  using T = typename L::T;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      Y[r * out + o] = dot<L>(X + r * in, Wt + o * in, in) + (bias ? bias[o] : T(0));
    }
  }
}

template <typename L>
void gemm_nn_acc(const typename L::T* dY, const typename L::T* Wt, typename L::T* dX,
                 std::size_t rows, std::size_t out, std::size_t in) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) axpy<L>(dY[r * out + o], Wt + o * in, dX + r * in, in);
}

template <typename L>
void gemm_tn_acc(const typename L::T* dY, const typename L::T* X, typename L::T* dW,
                 std::size_t rows, std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t r = 0; r < rows; ++r) axpy<L>(dY[r * out + o], X + r * in, dW + o * in, in);
}

}  // namespace

const KernelTable<double>& table_f64() {
  static const KernelTable<double> t{&dot<F64>, &axpy<F64>, &gemm_nt<F64>, &gemm_nn_acc<F64>,
                                     &gemm_tn_acc<F64>};
  return t;
}

const KernelTable<float>& table_f32() {
  static const KernelTable<float> t{&dot<F32>, &axpy<F32>, &gemm_nt<F32>, &gemm_nn_acc<F32>,
                                    &gemm_tn_acc<F32>};
  return t;
}

}  // namespace dtc::simd::neon

#endif
