#pragma once

#include <Eigen/Eigenvalues>

#include "dtc/common.hpp"
#include "dtc/env/task.hpp"

namespace testutil {

using dtc::Mat;
using dtc::Vec;

inline Mat random_matrix(dtc::Rng& rng, int r, int c, double sd = 1.0) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal(0.0, sd);
  return m;
}

inline double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Random n x n matrix rescaled to spectral radius `rho`.
inline Mat random_dynamics(dtc::Rng& rng, int n, double rho) {
  Mat A = random_matrix(rng, n, n);
  return A * (rho / spectral_radius(A));
}

inline dtc::env::TaskSpec linear_task(const Mat& A, const Mat& B, const Mat& C, double noise_cov, int n_steps,
                                      double init_std = 1.0) {
  dtc::env::LinearSystemSpec sys{A, B, C, noise_cov, n_steps, init_std};
  return {"test", sys, dtc::env::RewardSpec::diagonal(static_cast<int>(A.rows()), static_cast<int>(B.cols())),
          dtc::env::Nominal{}};
}

}  // namespace testutil
