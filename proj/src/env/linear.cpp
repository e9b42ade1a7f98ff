#include "dtc/env/linear.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <complex>

namespace dtc::env {

void LinearSystemSpec::validate() const {
  require(A.rows() == A.cols() && A.rows() > 0, "LinearSystemSpec: A must be square and non-empty");
  require(B2.rows() == A.rows() && B2.cols() > 0, "LinearSystemSpec: B2 must be n_s x n_a");
  require(C.cols() == A.rows() && C.rows() > 0, "LinearSystemSpec: C must be n_o x n_s");
  require(A.allFinite() && B2.allFinite() && C.allFinite(), "LinearSystemSpec: non-finite matrix entry");
  require(std::isfinite(noise_cov) && noise_cov >= 0.0, "LinearSystemSpec: noise_cov must be >= 0");
  require(n_steps >= 1, "LinearSystemSpec: n_steps must be >= 1");
  require(std::isfinite(init_std) && init_std >= 0.0, "LinearSystemSpec: init_std must be >= 0");
}

namespace {

// Smallest singular value of [A - lambda I, B] over the eigenvalues of A
// on or outside the unit circle must be positive.
bool pbh_rank_full(const Mat& A, const Mat& B, double tol) {
  using CMat = Eigen::MatrixXcd;
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Mat> es(A, false);
  const double scale = std::max({1.0, A.norm(), B.norm()});
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()[k];
    if (std::abs(lambda) < 1.0 - tol) continue;
    CMat M(n, n + B.cols());
    M.leftCols(n) = A.cast<std::complex<double>>() - lambda * CMat::Identity(n, n);
    M.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<CMat> svd(M);
    if (svd.singularValues()(n - 1) <= tol * scale) return false;
  }
  return true;
}

}  // namespace

bool is_stabilizable(const Mat& A, const Mat& B, double tol) { return pbh_rank_full(A, B, tol); }

bool is_detectable(const Mat& A, const Mat& C, double tol) {
  return pbh_rank_full(A.transpose(), C.transpose(), tol);
}

}  // namespace dtc::env
