#include "dtc/control/hinf.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>

#include "dtc/control/riccati.hpp"
#include "dtc/env/io.hpp"

namespace dtc::control {
namespace {

double min_eigenvalue(const Mat& X) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(X), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_radius(const Mat& X) {
  Eigen::EigenSolver<Mat> es(X, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// S+ = S- (I + H S-)^-1, valid for singular S-.
bool posterior(const Mat& prior, const Mat& H, Mat& post) {
  const auto n = prior.rows();
  Eigen::PartialPivLU<Mat> lu((Mat::Identity(n, n) + H * prior).transpose());
  if (!(lu.rcond() > 1e-14)) return false;
  post = symmetrize(lu.solve(prior.transpose()).transpose());
  return post.allFinite();
}

}  // namespace

HinfResult solve_hinf_central(const env::LinearSystemSpec& sys, const env::RewardSpec& reward, double gamma) {
  require(std::isfinite(gamma) && gamma > 0.0, "solve_hinf_central: gamma must be > 0");
  sys.validate();
  require(sys.noise_cov > 0.0, "solve_hinf_central: needs noise_cov > 0 (measurement weighting)");
  require(reward.n_s() == sys.n_s() && reward.n_a() == sys.n_a(), "solve_hinf_central: reward dimensions differ");

  const int n = sys.n_s();
  const Mat I = Mat::Identity(n, n);
  const double g2 = 1.0 / (gamma * gamma);
  const double sigma2 = sys.noise_cov;
  const Mat& A = sys.A;
  const Mat& B = sys.B2;
  const Mat& C = sys.C;

  Eigen::LDLT<Mat> r(reward.q2());
  const Mat R_inv_Q3t = r.solve(reward.q3().transpose());
  const Mat A_t = A - B * R_inv_Q3t;
  const Mat Q_t = symmetrize(reward.q1() - reward.q3() * R_inv_Q3t);
  const Mat BRB = symmetrize(B * r.solve(B.transpose()));
  const double scale = std::max(1.0, Q_t.norm());

  HinfController c;
  c.gamma = gamma;
  c.sys = sys;
  c.s_r = reward.s_r();
  c.Q_tilde = Q_t;

  try {
    c.M = solve_dare_doubling(A_t, BRB - g2 * sigma2 * I, Q_t);
  } catch (const SolverFailure& e) {
    return HinfInfeasible{gamma, std::string("control Riccati: ") + e.what()};
  }
  if (min_eigenvalue(c.M) < -1e-9 * std::max(1.0, c.M.norm()))
    return HinfInfeasible{gamma, "control Riccati solution is not positive semidefinite"};
  if (min_eigenvalue(gamma * gamma * I - sigma2 * c.M) <= 0.0)
    return HinfInfeasible{gamma, "disturbance channel condition gamma^2 I - D'MD > 0 fails"};

  Eigen::PartialPivLU<Mat> lam(I + (BRB - g2 * sigma2 * I) * c.M);
  if (!(lam.rcond() > 1e-14)) return HinfInfeasible{gamma, "control Riccati: singular Lambda"};
  c.K = r.solve(B.transpose() * c.M * lam.solve(A_t)) + R_inv_Q3t;

  const Mat H = symmetrize(C.transpose() * C / sigma2 - g2 * Q_t);
  const Mat W = sigma2 * I;
  try {
    c.Sigma_prior = solve_dare_doubling(A.transpose(), H, W);
  } catch (const SolverFailure& e) {
    return HinfInfeasible{gamma, std::string("estimation Riccati: ") + e.what()};
  }

  auto check_post = [&](const Mat& prior, Mat& post, const char* what) -> std::string {
    if (!posterior(prior, H, post)) return std::string(what) + ": singular posterior";
    if (min_eigenvalue(post) < -1e-9 * std::max(1.0, post.norm()))
      return std::string(what) + ": posterior covariance is not positive semidefinite";
    const double rho = spectral_radius(post * c.M);
    c.spectral_radius = std::max(c.spectral_radius, rho);
    if (!(rho < gamma * gamma)) return std::string(what) + ": coupling condition rho(Sigma M) < gamma^2 fails";
    return {};
  };

  if (auto err = check_post(c.Sigma_prior, c.Sigma_post, "stationary estimator"); !err.empty())
    return HinfInfeasible{gamma, err};

  // Transient from the initial covariance until it reaches the stationary value.
  Mat prior = sys.init_std * sys.init_std * I;
  for (int t = 0; t < sys.n_steps; ++t) {
    Mat post;
    if (auto err = check_post(prior, post, "transient estimator"); !err.empty()) return HinfInfeasible{gamma, err};
    c.Sigma_post_schedule.push_back(post);
    if ((post - c.Sigma_post).norm() <= 1e-12 * scale) break;
    prior = symmetrize(A * post * A.transpose()) + W;
  }
  return c;
}

GammaBracket bisect_hinf_threshold(const env::LinearSystemSpec& sys, const env::RewardSpec& reward,
                                   double lo, double hi, double tol) {
  require(lo > 0.0 && hi > lo && tol > 0.0, "bisect_hinf_threshold: need 0 < lo < hi, tol > 0");
  auto feasible = [&](double g) { return std::holds_alternative<HinfController>(solve_hinf_central(sys, reward, g)); };
  require(!feasible(lo), "bisect_hinf_threshold: lower end is feasible");
  require(feasible(hi), "bisect_hinf_threshold: upper end is infeasible");
  GammaBracket b{lo, hi, 0};
  while (b.feasible - b.infeasible > tol) {
    const double mid = 0.5 * (b.infeasible + b.feasible);
    (feasible(mid) ? b.feasible : b.infeasible) = mid;
    ++b.iterations;
  }
  return b;
}

HinfPolicy::HinfPolicy(HinfController controller) : c_(std::move(controller)) {
  CtVinv_ = c_.sys.C.transpose() / c_.sys.noise_cov;
  reset(0);
}

void HinfPolicy::reset(std::uint64_t) {
  x_bar_ = Vec::Zero(c_.sys.n_s());
  last_action_.resize(0);
  t_ = 0;
}

Vec HinfPolicy::act(const Vec& obs) {
  require(obs.size() == c_.sys.n_o(), "HinfPolicy: observation length mismatch");
  const auto n = c_.sys.n_s();
  if (t_ > 0) x_bar_ = c_.sys.A * x_bar_ + c_.sys.B2 * last_action_;
  const Mat& post = static_cast<std::size_t>(t_) < c_.Sigma_post_schedule.size()
                        ? c_.Sigma_post_schedule[static_cast<std::size_t>(t_)]
                        : c_.Sigma_post;
  const double g2 = 1.0 / (c_.gamma * c_.gamma);
  const Vec e_bar = x_bar_ - c_.s_r;
  const Vec x_post = x_bar_ + post * (CtVinv_ * (obs - c_.sys.C * x_bar_) + g2 * (c_.Q_tilde * e_bar));
  const Mat T = Mat::Identity(n, n) - g2 * post * c_.M;
  const Vec x_used = T.partialPivLu().solve(x_post - c_.s_r);
  last_action_ = -c_.K * x_used;
  x_bar_ = x_post;
  ++t_;
  return last_action_;
}

nlohmann::json hinf_to_json(const HinfController& c) {
  return {{"gamma", c.gamma},
          {"M", env::matrix_to_json(c.M)},
          {"K", env::matrix_to_json(c.K)},
          {"Q_tilde", env::matrix_to_json(c.Q_tilde)},
          {"Sigma_prior", env::matrix_to_json(c.Sigma_prior)},
          {"Sigma_post", env::matrix_to_json(c.Sigma_post)},
          {"spectral_radius", c.spectral_radius}};
}

}  // namespace dtc::control
