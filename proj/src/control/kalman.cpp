#include "dtc/control/kalman.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "dtc/control/riccati.hpp"

namespace dtc::control {

KalmanState kalman_prior(const env::LinearSystemSpec& sys) {
  const int n = sys.n_s();
  return {Vec::Zero(n), sys.init_std * sys.init_std * Mat::Identity(n, n)};
}

KalmanState kalman_predict(const KalmanState& k, const Vec& a, const env::LinearSystemSpec& sys) {
  require(k.x_hat.size() == sys.n_s() && a.size() == sys.n_a(), "kalman_predict: dimension mismatch");
  KalmanState out;
  out.x_hat = sys.A * k.x_hat + sys.B2 * a;
  out.Sigma = symmetrize(sys.A * k.Sigma * sys.A.transpose());
  out.Sigma.diagonal().array() += sys.noise_cov;
  return out;
}

KalmanState kalman_update(const KalmanState& k, const Vec& o, const env::LinearSystemSpec& sys) {
  require(k.x_hat.size() == sys.n_s() && o.size() == sys.n_o(), "kalman_update: dimension mismatch");
  const Mat& C = sys.C;
  const Mat PCt = k.Sigma * C.transpose();
  const double scale = std::max(1.0, k.Sigma.norm());
  if (PCt.norm() <= 1e-300 * scale) return k;

  Mat S = C * PCt;
  S.diagonal().array() += sys.noise_cov;
  Eigen::FullPivLU<Mat> lu(S);
  if (!lu.isInvertible() || lu.rcond() < 1e-14)
    throw SolverFailure("kalman_update: innovation covariance is singular", lu.rcond());
  const Mat gain = lu.solve(PCt.transpose()).transpose();  // Sigma C' S^-1

  KalmanState out;
  out.x_hat = k.x_hat + gain * (o - C * k.x_hat);
  const Mat IKC = Mat::Identity(sys.n_s(), sys.n_s()) - gain * C;
  Mat joseph = IKC * k.Sigma * IKC.transpose();
  joseph += sys.noise_cov * gain * gain.transpose();
  out.Sigma = symmetrize(joseph);
  return out;
}

KalmanState kalman_step(const KalmanState& k, const Vec& a, const Vec& o, const env::LinearSystemSpec& sys) {
  return kalman_update(kalman_predict(k, a, sys), o, sys);
}

Mat kalman_steady_covariance(const env::LinearSystemSpec& sys) {
  require(sys.noise_cov > 0.0, "kalman_steady_covariance: needs noise_cov > 0");
  const int n = sys.n_s();
  const Mat G = sys.C.transpose() * sys.C / sys.noise_cov;
  const Mat W = sys.noise_cov * Mat::Identity(n, n);
  return solve_dare_doubling(sys.A.transpose(), G, W);
}

}  // namespace dtc::control
