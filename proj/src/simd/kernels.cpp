#include "dtc/simd/kernels.hpp"

#include <atomic>

#include "dtc/common.hpp"
#include "kernels_scalar.hpp"

namespace dtc::simd {

#if defined(DTC_HAVE_AVX2)
namespace avx2 {
const KernelTable<double>& table_f64();
const KernelTable<float>& table_f32();
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
const KernelTable<double>& table_f64();
const KernelTable<float>& table_f32();
}  // namespace neon
#endif

namespace {

Backend detect_best() {
#if defined(DTC_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Backend::kAvx2;
#endif
#if defined(__aarch64__)
  return Backend::kNeon;
#endif
  return Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect_best()};
  return b;
}

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t{&scalar::dot<T>, &scalar::axpy<T>, &scalar::gemm_nt<T>,
                                &scalar::gemm_nn_acc<T>, &scalar::gemm_tn_acc<T>};
  return t;
}

[[noreturn]] void unavailable(Backend b);

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::kScalar: return true;
    case Backend::kAvx2:
#if defined(DTC_HAVE_AVX2)
    {
      static const bool ok = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
      }();
      return ok;
    }
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {
void unavailable(Backend b) {
  throw ContractViolation("simd backend unavailable: " + std::string(backend_name(b)));
}
}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) unavailable(b);
  current().store(b, std::memory_order_relaxed);
}

void reset_backend() { current().store(detect_best(), std::memory_order_relaxed); }

template <>
const KernelTable<double>& kernels_for<double>(Backend b) {
  if (!backend_available(b)) unavailable(b);
  switch (b) {
#if defined(DTC_HAVE_AVX2)
    case Backend::kAvx2: return avx2::table_f64();
#endif
#if defined(__aarch64__)
    case Backend::kNeon: return neon::table_f64();
#endif
    default: return scalar_table<double>();
  }
}

template <>
const KernelTable<float>& kernels_for<float>(Backend b) {
  if (!backend_available(b)) unavailable(b);
  switch (b) {
#if defined(DTC_HAVE_AVX2)
    case Backend::kAvx2: return avx2::table_f32();
#endif
#if defined(__aarch64__)
    case Backend::kNeon: return neon::table_f32();
#endif
    default: return scalar_table<float>();
  }
}

}  // namespace dtc::simd
