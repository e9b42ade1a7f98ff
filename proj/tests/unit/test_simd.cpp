#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "dtc/common.hpp"
#include "dtc/simd/kernels.hpp"

using namespace dtc;
using namespace dtc::simd;

namespace {

template <typename T>
std::vector<T> random_vec(std::mt19937_64& g, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(g));
  return v;
}

template <typename T>
double tolerance() {
  return std::is_same_v<T, float> ? 2e-5 : 1e-13;
}

template <typename T>
void close(const std::vector<T>& a, const std::vector<T>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(double(a[i]) - double(b[i])) <= tolerance<T>() * scale);
}

template <typename T>
void compare_backend(Backend b) {
  const auto& ref = kernels_for<T>(Backend::kScalar);
  const auto& k = kernels_for<T>(b);
  std::mt19937_64 g(17);
  const std::size_t sizes[] = {1, 3, 4, 7, 8, 9, 15, 16, 17, 31, 33, 64, 129};
  for (std::size_t n : sizes) {
    const auto x = random_vec<T>(g, n), y = random_vec<T>(g, n);
    CHECK(std::abs(double(k.dot(x.data(), y.data(), n)) - double(ref.dot(x.data(), y.data(), n))) <=
          tolerance<T>() * (1 + n));
    auto y1 = y, y2 = y;
    k.axpy(T(0.7), x.data(), y1.data(), n);
    ref.axpy(T(0.7), x.data(), y2.data(), n);
    close(y1, y2, 1.0);
  }
  for (std::size_t rows : {1, 3, 6})
    for (std::size_t in : {1, 5, 8, 13, 32})
      for (std::size_t out : {1, 2, 4, 7, 9, 24}) {
        const auto X = random_vec<T>(g, rows * in), W = random_vec<T>(g, out * in), bias = random_vec<T>(g, out);
        const auto dY = random_vec<T>(g, rows * out);
        const double scale = 1.0 + in + out;
        std::vector<T> Y1(rows * out), Y2(rows * out);
        k.gemm_nt(X.data(), W.data(), bias.data(), Y1.data(), rows, in, out);
        ref.gemm_nt(X.data(), W.data(), bias.data(), Y2.data(), rows, in, out);
        close(Y1, Y2, scale);
        k.gemm_nt(X.data(), W.data(), nullptr, Y1.data(), rows, in, out);
        ref.gemm_nt(X.data(), W.data(), nullptr, Y2.data(), rows, in, out);
        close(Y1, Y2, scale);
        auto dX1 = random_vec<T>(g, rows * in), dX2 = dX1;
        k.gemm_nn_acc(dY.data(), W.data(), dX1.data(), rows, out, in);
        ref.gemm_nn_acc(dY.data(), W.data(), dX2.data(), rows, out, in);
        close(dX1, dX2, scale);
        auto dW1 = random_vec<T>(g, out * in), dW2 = dW1;
        k.gemm_tn_acc(dY.data(), X.data(), dW1.data(), rows, out, in);
        ref.gemm_tn_acc(dY.data(), X.data(), dW2.data(), rows, out, in);
        close(dW1, dW2, scale + rows);
      }
}

}  // namespace

TEST_CASE("scalar reference kernels against direct loops") {
  const auto& k = kernels_for<double>(Backend::kScalar);
  const std::vector<double> X{1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<double> W{1, 0, -1, 2, 1, 0};  // 2 x 3
  const std::vector<double> b{0.5, -0.5};
  std::vector<double> Y(4);
  k.gemm_nt(X.data(), W.data(), b.data(), Y.data(), 2, 3, 2);
  CHECK(Y == std::vector<double>{1 - 3 + 0.5, 2 + 2 - 0.5, 4 - 6 + 0.5, 8 + 5 - 0.5});
  std::vector<double> dX(6, 1.0);
  const std::vector<double> dY{1, 2, 3, 4};
  k.gemm_nn_acc(dY.data(), W.data(), dX.data(), 2, 2, 3);
  CHECK(dX == std::vector<double>{1 + 1 + 4, 1 + 0 + 2, 1 - 1 + 0, 1 + 3 + 8, 1 + 0 + 4, 1 - 3 + 0});
  std::vector<double> dW(6, 0.0);
  k.gemm_tn_acc(dY.data(), X.data(), dW.data(), 2, 2, 3);
  CHECK(dW == std::vector<double>{1 * 1 + 3 * 4, 1 * 2 + 3 * 5, 1 * 3 + 3 * 6, 2 * 1 + 4 * 4, 2 * 2 + 4 * 5, 2 * 3 + 4 * 6});
}

TEST_CASE("vectorized kernels agree with the scalar reference") {
  for (Backend b : {Backend::kAvx2, Backend::kNeon}) {
    if (!backend_available(b)) continue;
    CAPTURE(backend_name(b));
    compare_backend<double>(b);
    compare_backend<float>(b);
  }
}

TEST_CASE("backend selection") {
  CHECK(backend_available(Backend::kScalar));
  const Backend start = active_backend();
  set_backend(Backend::kScalar);
  CHECK(active_backend() == Backend::kScalar);
  for (Backend b : {Backend::kAvx2, Backend::kNeon})
    if (!backend_available(b)) CHECK_THROWS_AS(set_backend(b), ContractViolation);
  reset_backend();
  CHECK(active_backend() == start);
}
