#pragma once

#include "dtc/common.hpp"

namespace dtc::env {

/// s' = A s + B2 a + w,  o = C s + v,  w, v ~ N(0, noise_cov I).
struct LinearSystemSpec {
  Mat A;
  Mat B2;
  Mat C;
  double noise_cov = 0.0;
  int n_steps = 1;
  double init_std = 1.0;

  int n_s() const { return static_cast<int>(A.rows()); }
  int n_a() const { return static_cast<int>(B2.cols()); }
  int n_o() const { return static_cast<int>(C.rows()); }

  /// Throws ContractViolation on inconsistent dimensions or invalid scalars.
  void validate() const;
};

/// PBH test: every eigenvalue of A with |lambda| >= 1 is controllable through B.
bool is_stabilizable(const Mat& A, const Mat& B, double tol = 1e-9);
/// Dual of is_stabilizable for the pair (A, C).
bool is_detectable(const Mat& A, const Mat& C, double tol = 1e-9);

}  // namespace dtc::env
