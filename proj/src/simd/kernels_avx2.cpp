// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// runtime CPU check; do not include from other translation units.

#include <immintrin.h>

#include <cstddef>

#include "dtc/simd/kernels.hpp"
#include "kernels_scalar.hpp"

namespace dtc::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehl_ps(lo, lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_shuffle_ps(lo, lo, 0x1);
  return _mm_cvtss_f32(_mm_add_ss(lo, sh));
}

// Lane traits so the kernels below are written once for both precisions.
struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
};

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
};

template <typename L>
typename L::T dot(const typename L::T* x, const typename L::T* y, std::size_t n) {
  constexpr std::size_t W = L::kLanes;
  auto a0 = L::zero(), a1 = L::zero(), a2 = L::zero(), a3 = L::zero();
  std::size_t i = 0;
  for (; i + 4 * W <= n; i += 4 * W) {
    a0 = L::fma(L::load(x + i), L::load(y + i), a0);
    a1 = L::fma(L::load(x + i + W), L::load(y + i + W), a1);
    a2 = L::fma(L::load(x + i + 2 * W), L::load(y + i + 2 * W), a2);
    a3 = L::fma(L::load(x + i + 3 * W), L::load(y + i + 3 * W), a3);
  }
  for (; i + W <= n; i += W) a0 = L::fma(L::load(x + i), L::load(y + i), a0);
  auto acc = hsum(L::add(L::add(a0, a1), L::add(a2, a3)));
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

// Four output columns per pass share the loads of the input row.
template <typename L>
void gemm_nt(const typename L::T* X, const typename L::T* Wt, const typename L::T* bias,
             typename L::T* Y, std::size_t rows, std::size_t in, std::size_t out) {
  using T = typename L::T;
  constexpr std::size_t W = L::kLanes;
  const std::size_t in_vec = in - in % W;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = X + r * in;
    T* y = Y + r * out;
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
      const T* w0 = Wt + o * in;
      const T* w1 = w0 + in;
      const T* w2 = w1 + in;
      const T* w3 = w2 + in;
      auto a0 = L::zero(), a1 = L::zero(), a2 = L::zero(), a3 = L::zero();
      for (std::size_t i = 0; i < in_vec; i += W) {
        const auto xv = L::load(x + i);
        a0 = L::fma(xv, L::load(w0 + i), a0);
        a1 = L::fma(xv, L::load(w1 + i), a1);
        a2 = L::fma(xv, L::load(w2 + i), a2);
        a3 = L::fma(xv, L::load(w3 + i), a3);
      }
      T s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
      for (std::size_t i = in_vec; i < in; ++i) {
        s0 += x[i] * w0[i];
        s1 += x[i] * w1[i];
        s2 += x[i] * w2[i];
        s3 += x[i] * w3[i];
      }
      y[o] = s0 + (bias ? bias[o] : T(0));
      y[o + 1] = s1 + (bias ? bias[o + 1] : T(0));
      y[o + 2] = s2 + (bias ? bias[o + 2] : T(0));
      y[o + 3] = s3 + (bias ? bias[o + 3] : T(0));
    }
    for (; o < out; ++o) y[o] = dot<L>(x, Wt + o * in, in) + (bias ? bias[o] : T(0));
  }
}

template <typename L>
void gemm_nn_acc(const typename L::T* dY, const typename L::T* Wt, typename L::T* dX,
                 std::size_t rows, std::size_t out, std::size_t in) {
  using T = typename L::T;
  constexpr std::size_t W = L::kLanes;
  const std::size_t in_vec = in - in % W;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = dY + r * out;
    T* dx = dX + r * in;
    for (std::size_t i = 0; i < in_vec; i += W) {
      auto acc = L::load(dx + i);
      for (std::size_t o = 0; o < out; ++o) acc = L::fma(L::set1(g[o]), L::load(Wt + o * in + i), acc);
      L::store(dx + i, acc);
    }
    for (std::size_t i = in_vec; i < in; ++i) {
      T acc = dx[i];
      for (std::size_t o = 0; o < out; ++o) acc += g[o] * Wt[o * in + i];
      dx[i] = acc;
    }
  }
}

template <typename L>
void gemm_tn_acc(const typename L::T* dY, const typename L::T* X, typename L::T* dW,
                 std::size_t rows, std::size_t out, std::size_t in) {
  using T = typename L::T;
  constexpr std::size_t W = L::kLanes;
  const std::size_t in_vec = in - in % W;
  for (std::size_t o = 0; o < out; ++o) {
    T* dw = dW + o * in;
    for (std::size_t i = 0; i < in_vec; i += W) {
      auto acc = L::load(dw + i);
      for (std::size_t r = 0; r < rows; ++r) acc = L::fma(L::set1(dY[r * out + o]), L::load(X + r * in + i), acc);
      L::store(dw + i, acc);
    }
    for (std::size_t i = in_vec; i < in; ++i) {
      T acc = dw[i];
      for (std::size_t r = 0; r < rows; ++r) acc += dY[r * out + o] * X[r * in + i];
      dw[i] = acc;
    }
  }
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

}  // namespace dtc::simd::avx2
