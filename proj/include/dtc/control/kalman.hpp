#pragma once

#include "dtc/env/linear.hpp"

namespace dtc::control {

struct KalmanState {
  Vec x_hat;
  Mat Sigma;
};

/// Prior before the first observation: x_hat = 0, Sigma = init_std^2 I.
KalmanState kalman_prior(const env::LinearSystemSpec& sys);

/// Time update with W = noise_cov I.
KalmanState kalman_predict(const KalmanState& k, const Vec& a, const env::LinearSystemSpec& sys);

/// Measurement update with V = noise_cov I (Joseph form, symmetrized). When the
/// prior covariance is invisible through C (Sigma C' = 0) the observation carries
/// no information and the state passes through unchanged; otherwise a singular
/// innovation covariance throws SolverFailure.
KalmanState kalman_update(const KalmanState& k, const Vec& o, const env::LinearSystemSpec& sys);

/// Predict with action `a`, then update with the next observation `o`.
KalmanState kalman_step(const KalmanState& k, const Vec& a, const Vec& o, const env::LinearSystemSpec& sys);

/// Stationary a-priori covariance of the filter (dual Riccati fixed point).
Mat kalman_steady_covariance(const env::LinearSystemSpec& sys);

}  // namespace dtc::control
