#include "dtc/control/riccati.hpp"

#include <Eigen/LU>

#include <cmath>

namespace dtc::control {
namespace {

void check_dims(const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3) {
  const auto n = A.rows(), m = B.cols();
  require(A.cols() == n && B.rows() == n, "solve_lqr: A must be n x n and B n x m");
  require(Q1.rows() == n && Q1.cols() == n, "solve_lqr: Q1 must be n x n");
  require(Q2.rows() == m && Q2.cols() == m, "solve_lqr: Q2 must be m x m");
  require(Q3.rows() == n && Q3.cols() == m, "solve_lqr: Q3 must be n x m");
}

}  // namespace

Mat riccati_gain(const Mat& P, const Mat& A, const Mat& B, const Mat& Q2, const Mat& Q3) {
  const Mat S = Q2 + B.transpose() * P * B;
  const Mat rhs = B.transpose() * P * A + Q3.transpose();
  Eigen::LDLT<Mat> ldlt(symmetrize(S));
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    throw SolverFailure("riccati_gain: Q2 + B'PB is not positive definite");
  return ldlt.solve(rhs);
}

Mat riccati_step(const Mat& P, const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3) {
  const Mat K = riccati_gain(P, A, B, Q2, Q3);
  const Mat cross = A.transpose() * P * B + Q3;
  return symmetrize(Q1 + A.transpose() * P * A - cross * K);
}

Mat solve_dare_doubling(const Mat& A, const Mat& G, const Mat& Q, double tol, int max_iterations,
                        int* iterations) {
  const auto n = A.rows();
  const Mat I = Mat::Identity(n, n);
  Mat Ak = A, Gk = G, Hk = Q;
  for (int k = 1; k <= max_iterations; ++k) {
    Eigen::PartialPivLU<Mat> lu(I + Gk * Hk);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) throw SolverFailure("doubling iteration: I + G H is singular", rc);
    const Mat W1 = lu.solve(Ak);                  // (I + G H)^-1 A
    const Mat W2 = lu.solve(Gk);                  // (I + G H)^-1 G
    const Mat H_next = symmetrize(Hk + Ak.transpose() * Hk * W1);
    Gk = symmetrize(Gk + Ak * W2 * Ak.transpose());
    Ak = Ak * W1;
    const double change = (H_next - Hk).cwiseAbs().maxCoeff();
    Hk = H_next;
    const double size = Hk.cwiseAbs().maxCoeff();
    if (!std::isfinite(size) || size > 1e150) throw SolverFailure("doubling iteration diverged", change);
    if (iterations) *iterations = k;
    if (change <= tol * std::max(1.0, size)) return Hk;
    // Past 2^60 stages the value iterate is meaningless if it still moves.
    if (k >= 60) throw SolverFailure("doubling iteration did not converge", change);
  }
  throw SolverFailure("doubling iteration hit the iteration cap", 0.0);
}

RiccatiSolution solve_lqr(const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3,
                          Horizon horizon, const Mat& terminal) {
  check_dims(A, B, Q1, Q2, Q3);
  const auto n = A.rows();
  RiccatiSolution sol;

  if (!horizon.is_infinite()) {
    Mat P = terminal.size() == 0 ? Mat::Zero(n, n) : terminal;
    require(P.rows() == n && P.cols() == n, "solve_lqr: terminal cost must be n x n");
    const int T = horizon.steps;
    sol.values.assign(T + 1, Mat());
    sol.gains.assign(T, Mat());
    sol.values[T] = P;
    for (int t = T - 1; t >= 0; --t) {
      sol.gains[t] = riccati_gain(P, A, B, Q2, Q3);
      P = riccati_step(P, A, B, Q1, Q2, Q3);
      sol.values[t] = P;
    }
    sol.P = P;
    sol.K = T > 0 ? sol.gains[0] : Mat::Zero(B.cols(), n);
    sol.iterations = T;
    return sol;
  }

  // Remove the cross term: u = v - Q2^-1 Q3' x.
  Eigen::LDLT<Mat> r(Q2);
  const Mat R_inv_Q3t = r.solve(Q3.transpose());
  const Mat A_bar = A - B * R_inv_Q3t;
  const Mat Q_bar = symmetrize(Q1 - Q3 * R_inv_Q3t);
  const Mat G = symmetrize(B * r.solve(B.transpose()));
  int iters = 0;
  Mat P = solve_dare_doubling(A_bar, G, Q_bar, 1e-10, 100000, &iters);
  // Polish with plain value-iteration steps; each is a contraction near the fixed point.
  double res = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Mat next = riccati_step(P, A, B, Q1, Q2, Q3);
    res = (next - P).norm();
    P = next;
  }
  res = (riccati_step(P, A, B, Q1, Q2, Q3) - P).norm();
  if (!(res <= 1e-8 * std::max(1.0, P.cwiseAbs().maxCoeff())))
    throw SolverFailure("solve_lqr: fixed-point residual too large", res);
  sol.P = P;
  sol.K = riccati_gain(P, A, B, Q2, Q3);
  sol.iterations = iters;
  sol.residual = res;
  return sol;
}

}  // namespace dtc::control
