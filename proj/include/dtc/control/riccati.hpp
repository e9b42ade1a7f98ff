#pragma once

#include <vector>

#include "dtc/common.hpp"

namespace dtc::control {

/// Finite horizon of `steps` stages, or infinite when steps < 0.
struct Horizon {
  int steps = -1;
  static Horizon infinite() { return {}; }
  static Horizon finite(int t) { return {t}; }
  bool is_infinite() const { return steps < 0; }
};

/// Value matrix and gain of the cost sum x'Q1x + u'Q2u + 2x'Q3u under
/// x+ = A x + B u; the optimal input is u = -K x.
struct RiccatiSolution {
  Mat P;
  Mat K;
  /// Finite horizon: gains[t] and values[t] for stage t (values has one extra
  /// terminal entry). Empty for the infinite horizon.
  std::vector<Mat> gains;
  std::vector<Mat> values;
  int iterations = 0;
  double residual = 0.0;
};

/// One backward step P -> Q1 + A'PA - (A'PB + Q3)(Q2 + B'PB)^-1 (B'PA + Q3').
Mat riccati_step(const Mat& P, const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3);
/// K = (Q2 + B'PB)^-1 (B'PA + Q3').
Mat riccati_gain(const Mat& P, const Mat& A, const Mat& B, const Mat& Q2, const Mat& Q3);

/// Infinite horizon: value iteration from P = 0 accelerated by doubling (iterate k
/// equals the value iterate after 2^k stages), stopped at relative change 1e-10,
/// then checked against the fixed-point residual. Throws SolverFailure when the
/// iteration does not settle (e.g. (A, B) not stabilizable).
/// Finite horizon: backward recursion from `terminal` (zero when empty).
RiccatiSolution solve_lqr(const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3,
                          Horizon horizon, const Mat& terminal = Mat());

/// Stabilizing solution of X = Q + A'X(I + G X)^-1 A by the structure-preserving
/// doubling algorithm. G may be indefinite. Throws SolverFailure on breakdown.
Mat solve_dare_doubling(const Mat& A, const Mat& G, const Mat& Q, double tol = 1e-10,
                        int max_iterations = 100000, int* iterations = nullptr);

/// Symmetric part (X + X') / 2.
inline Mat symmetrize(const Mat& X) { return 0.5 * (X + X.transpose()); }

}  // namespace dtc::control
