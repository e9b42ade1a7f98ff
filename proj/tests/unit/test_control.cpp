#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "dtc/control/hinf.hpp"
#include "dtc/control/kalman.hpp"
#include "dtc/control/lqg.hpp"
#include "dtc/control/riccati.hpp"
#include "dtc/control/static_gain.hpp"
#include "dtc/env/linear.hpp"

using namespace dtc;
using namespace dtc::control;
using testutil::random_dynamics;
using testutil::random_matrix;

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }
Vec scalar_vec(double v) { return Vec::Constant(1, v); }

double min_eig(const Mat& X) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (X + X.transpose()));
  return es.eigenvalues().minCoeff();
}

struct RandomSystem {
  env::LinearSystemSpec sys;
  env::RewardSpec reward;
};

RandomSystem random_system(Rng& rng, int n, int m, int p, double rho, double noise_cov) {
  for (;;) {
    env::LinearSystemSpec sys{random_dynamics(rng, n, rho), random_matrix(rng, n, m), random_matrix(rng, p, n),
                              noise_cov, 50, 1.0};
    if (env::is_stabilizable(sys.A, sys.B2) && env::is_detectable(sys.A, sys.C))
      return {sys, env::RewardSpec::diagonal(n, m)};
  }
}

// Plain value iteration, independent of the doubling solver.
Mat value_iteration(const Mat& A, const Mat& B, const Mat& Q1, const Mat& Q2, const Mat& Q3, int steps) {
  Mat P = Mat::Zero(A.rows(), A.rows());
  for (int k = 0; k < steps; ++k) {
    const Mat S = Q2 + B.transpose() * P * B;
    const Mat L = A.transpose() * P * B + Q3;
    P = Q1 + A.transpose() * P * A - L * S.inverse() * L.transpose();
    P = 0.5 * (P + P.transpose());
  }
  return P;
}

}  // namespace

TEST_CASE("lqr: scalar golden-ratio fixed point") {
  const auto sol = solve_lqr(scalar(1), scalar(1), scalar(1), scalar(1), scalar(0), Horizon::infinite());
  CHECK(std::abs(sol.P(0, 0) - (1 + std::sqrt(5.0)) / 2) <= 1e-8);
  CHECK(std::abs(sol.K(0, 0) - (std::sqrt(5.0) - 1) / 2) <= 1e-8);
}

TEST_CASE("lqr: A = 0 decouples") {
  Rng rng(1);
  const Mat L = random_matrix(rng, 3, 3);
  const Mat Q1 = L * L.transpose();
  const auto sol = solve_lqr(Mat::Zero(3, 3), random_matrix(rng, 3, 2), Q1, Mat::Identity(2, 2), Mat::Zero(3, 2),
                             Horizon::infinite());
  CHECK((sol.P - Q1).norm() <= 1e-12);
  CHECK(sol.K.norm() <= 1e-12);
}

TEST_CASE("lqr: one-step horizon matches hand matrix arithmetic") {
  Rng rng(2);
  const Mat A = random_matrix(rng, 2, 2), B = random_matrix(rng, 2, 2);
  const Mat L = random_matrix(rng, 2, 2);
  const Mat Q1 = L * L.transpose(), Q2 = Mat::Identity(2, 2) * 1.5, Q3 = random_matrix(rng, 2, 2, 0.1);
  const auto sol = solve_lqr(A, B, Q1, Q2, Q3, Horizon::finite(1));
  // With zero terminal cost: minimise x'Q1x + u'Q2u + 2x'Q3u over u -> u = -Q2^-1 Q3' x.
  const Mat K = Q2.inverse() * Q3.transpose();
  const Mat P = Q1 - Q3 * Q2.inverse() * Q3.transpose();
  CHECK((sol.P - P).norm() <= 1e-12);
  CHECK((sol.K - K).norm() <= 1e-12);
  // Two stages: brute-force recursion.
  const auto two = solve_lqr(A, B, Q1, Q2, Q3, Horizon::finite(2));
  const Mat S = Q2 + B.transpose() * P * B;
  const Mat M = A.transpose() * P * B + Q3;
  CHECK((two.P - (Q1 + A.transpose() * P * A - M * S.inverse() * M.transpose())).norm() <= 1e-10);
}

TEST_CASE("lqr: random 4-state fixed-point residual") {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto rs = random_system(rng, 4, 2, 2, 1.3, 0.01);
    const auto sol = solve_lqr(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), Horizon::infinite());
    const Mat next = riccati_step(sol.P, rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3());
    CHECK((next - sol.P).norm() <= 1e-8);
    CHECK(min_eig(sol.P) >= -1e-10);
    const Mat vi = value_iteration(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), 20000);
    CHECK((vi - sol.P).norm() <= 1e-6 * sol.P.norm());
    CHECK(testutil::spectral_radius(rs.sys.A - rs.sys.B2 * sol.K) < 1.0);
  }
}

TEST_CASE("lqr: cross term") {
  Rng rng(4);
  const auto rs = random_system(rng, 3, 2, 1, 1.1, 0.01);
  const Mat Q3 = random_matrix(rng, 3, 2, 0.2);
  const Mat Q1 = Mat::Identity(3, 3) * 2.0;
  const Mat Q2 = Mat::Identity(2, 2);
  const auto sol = solve_lqr(rs.sys.A, rs.sys.B2, Q1, Q2, Q3, Horizon::infinite());
  const Mat vi = value_iteration(rs.sys.A, rs.sys.B2, Q1, Q2, Q3, 20000);
  CHECK((vi - sol.P).norm() <= 1e-6 * sol.P.norm());
}

TEST_CASE("lqr: finite-horizon values are monotone in the stages to go") {
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const auto rs = random_system(rng, 4, 2, 2, 1.2, 0.01);
    const auto sol = solve_lqr(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), Horizon::finite(30));
    REQUIRE(sol.values.size() == 31);
    REQUIRE(sol.gains.size() == 30);
    for (int t = 0; t < 30; ++t) CHECK(min_eig(sol.values[t] - sol.values[t + 1]) >= -1e-9 * sol.values[t].norm());
  }
}

TEST_CASE("lqr: unstabilizable pair fails with a residual") {
  Mat A(2, 2);
  A << 1.5, 0, 0, 0.2;
  Mat B(2, 1);
  B << 0, 1;
  CHECK_THROWS_AS(solve_lqr(A, B, Mat::Identity(2, 2), scalar(1), Mat::Zero(2, 1), Horizon::infinite()), SolverFailure);
}

TEST_CASE("kalman: perfect observation recovers the state") {
  Rng rng(6);
  env::LinearSystemSpec sys{random_dynamics(rng, 3, 0.9), random_matrix(rng, 3, 1), Mat::Identity(3, 3), 0.0, 10, 1.0};
  const Vec s = rng.normal_vector(3);
  const KalmanState k = kalman_update(kalman_prior(sys), s, sys);
  CHECK((k.x_hat - s).norm() <= 1e-12);
  // Next step: Sigma = 0, the update is skipped and the prediction is exact.
  const Vec a = scalar_vec(0.4);
  const Vec s1 = sys.A * s + sys.B2 * a;
  const KalmanState k1 = kalman_step(k, a, s1, sys);
  CHECK((k1.x_hat - s1).norm() <= 1e-12);
}

TEST_CASE("kalman: scalar hand recursion") {
  env::LinearSystemSpec sys{scalar(1), scalar(1), scalar(1), 1.0, 10, 1.0};
  const KalmanState prior{scalar_vec(0.0), scalar(1.0)};
  const KalmanState k = kalman_update(prior, scalar_vec(2.0), sys);
  CHECK(k.x_hat[0] == doctest::Approx(1.0).epsilon(1e-15));  // gain 1 / (1 + 1) = 0.5
  CHECK(k.Sigma(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kalman: steady covariance matches the iterated recursion") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    const double a = rng.uniform(-0.95, 0.95), c = rng.uniform(0.2, 2.0);
    env::LinearSystemSpec sys{scalar(a), scalar(1), scalar(c), rng.uniform(0.01, 1.0), 10, 1.0};
    KalmanState k = kalman_prior(sys);
    for (int t = 0; t < 10000; ++t) k = kalman_step(k, scalar_vec(0.0), scalar_vec(0.0), sys);
    const Mat prior = kalman_predict(k, scalar_vec(0.0), sys).Sigma;
    CHECK(std::abs(prior(0, 0) - kalman_steady_covariance(sys)(0, 0)) <= 1e-12);
  }
}

TEST_CASE("kalman: covariance stays symmetric PSD") {
  Rng rng(8);
  const auto rs = random_system(rng, 5, 2, 2, 1.1, 0.01);
  KalmanState k = kalman_prior(rs.sys);
  for (int t = 0; t < 200; ++t) {
    k = kalman_step(k, rng.normal_vector(2), rng.normal_vector(2), rs.sys);
    CHECK((k.Sigma - k.Sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(min_eig(k.Sigma) >= -1e-12);
  }
}

TEST_CASE("kalman: singular innovation covariance is reported") {
  env::LinearSystemSpec sys{Mat::Identity(2, 2), Mat::Ones(2, 1), Mat::Ones(2, 2), 0.0, 5, 1.0};
  CHECK_THROWS_AS(kalman_update(kalman_prior(sys), Vec::Ones(2), sys), SolverFailure);
}

TEST_CASE("lqg: zero estimate gives zero action") {
  Rng rng(9);
  const auto rs = random_system(rng, 3, 1, 2, 0.9, 0.01);
  LqgPolicy p(rs.sys, rs.reward);
  p.reset(0);
  CHECK(p.act(Vec::Zero(2)).norm() == 0.0);
}

TEST_CASE("lqg: noise-free identity observation equals state-feedback LQR") {
  Rng rng(10);
  auto rs = random_system(rng, 3, 2, 3, 1.2, 0.0);
  rs.sys.C = Mat::Identity(3, 3);
  const auto lqr = solve_lqr(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), Horizon::infinite());
  LqgPolicy p(rs.sys, rs.reward);
  p.reset(0);
  Vec s = rng.normal_vector(3);
  for (int t = 0; t < 20; ++t) {
    const Vec a = p.act(s);
    CHECK((a + lqr.K * s).norm() <= 1e-12 * std::max(1.0, s.norm()));
    s = rs.sys.A * s + rs.sys.B2 * a;
  }
}

TEST_CASE("lqg: matches an independently coded filter and gain") {
  Rng rng(11);
  const auto rs = random_system(rng, 3, 1, 2, 1.05, 0.05);
  const auto& sys = rs.sys;
  const auto lqr = solve_lqr(sys.A, sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), Horizon::infinite());
  env::Environment e(testutil::linear_task(sys.A, sys.B2, sys.C, sys.noise_cov, 10));
  LqgPolicy p(sys, rs.reward);
  p.reset(0);
  Vec o = e.reset(5);

  // Reference: textbook covariance form with explicit inverse.
  Vec x = Vec::Zero(3);
  Mat S = Mat::Identity(3, 3);
  const Mat W = sys.noise_cov * Mat::Identity(3, 3), V = sys.noise_cov * Mat::Identity(2, 2);
  std::vector<Vec> obs{o}, acts;
  for (int t = 0; t < 10; ++t) {
    if (t > 0) {
      x = sys.A * x + sys.B2 * acts.back();
      S = sys.A * S * sys.A.transpose() + W;
    }
    const Mat G = S * sys.C.transpose() * (sys.C * S * sys.C.transpose() + V).inverse();
    x = x + G * (o - sys.C * x);
    S = (Mat::Identity(3, 3) - G * sys.C) * S;
    const Vec ref = -lqr.K * x;
    const Vec a = p.act(o);
    CHECK((a - ref).norm() <= 1e-10 * std::max(1.0, ref.norm()));
    CHECK((lqg_policy(obs, acts, sys, rs.reward) - ref).norm() <= 1e-10 * std::max(1.0, ref.norm()));
    acts.push_back(a);
    o = e.step(a).obs;
    obs.push_back(o);
  }
}

TEST_CASE("lqg: finite-horizon gains are stage indexed") {
  Rng rng(12);
  const auto rs = random_system(rng, 2, 1, 1, 0.9, 0.01);
  LqgPolicy p(rs.sys, rs.reward, true);
  const auto fin = solve_lqr(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(),
                             Horizon::finite(rs.sys.n_steps));
  CHECK(p.gain(0) == fin.gains[0]);
  CHECK(p.gain(rs.sys.n_steps - 1) == fin.gains.back());
}

TEST_CASE("hinf: large gamma recovers LQG") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const auto rs = random_system(rng, 3, 1, 2, 1.1, 0.01);
    const auto res = solve_hinf_central(rs.sys, rs.reward, 1e6);
    REQUIRE(std::holds_alternative<HinfController>(res));
    const auto& c = std::get<HinfController>(res);
    const auto lqr = solve_lqr(rs.sys.A, rs.sys.B2, rs.reward.q1(), rs.reward.q2(), rs.reward.q3(), Horizon::infinite());
    CHECK((c.K - lqr.K).norm() <= 1e-3 * lqr.K.norm());
    CHECK((c.Sigma_prior - kalman_steady_covariance(rs.sys)).norm() <= 1e-3 * c.Sigma_prior.norm());
  }
}

TEST_CASE("hinf: scalar control Riccati matches the hand root") {
  const double a = 1.2, b = 0.8, c = 1.0, q = 1.0, nc = 0.04, gamma = 3.0;
  env::LinearSystemSpec sys{scalar(a), scalar(b), scalar(c), nc, 50, 1.0};
  const env::RewardSpec rw(scalar(q), scalar(1.0), scalar(0.0), scalar_vec(0.0));
  const auto res = solve_hinf_central(sys, rw, gamma);
  REQUIRE(std::holds_alternative<HinfController>(res));
  const double beta = b * b - nc / (gamma * gamma);
  // beta M^2 + (1 - q beta - a^2) M - q = 0, positive root.
  const double B = 1 - q * beta - a * a;
  const double M = (-B + std::sqrt(B * B + 4 * beta * q)) / (2 * beta);
  CHECK(std::get<HinfController>(res).M(0, 0) == doctest::Approx(M).epsilon(1e-10));
}

TEST_CASE("hinf: bisection brackets the feasibility threshold") {
  Rng rng(14);
  const auto rs = random_system(rng, 3, 1, 2, 1.1, 0.01);
  double lo = 1e-3;
  while (std::holds_alternative<HinfController>(solve_hinf_central(rs.sys, rs.reward, lo))) lo /= 10;
  const GammaBracket br = bisect_hinf_threshold(rs.sys, rs.reward, lo, 1e6, 1e-3);
  CHECK(br.feasible - br.infeasible <= 1e-3);
  CHECK(std::holds_alternative<HinfInfeasible>(solve_hinf_central(rs.sys, rs.reward, br.infeasible)));
  CHECK(std::holds_alternative<HinfController>(solve_hinf_central(rs.sys, rs.reward, br.feasible)));
  CHECK(std::holds_alternative<HinfInfeasible>(solve_hinf_central(rs.sys, rs.reward, 0.5 * br.infeasible)));
}

TEST_CASE("hinf: policy actions approach LQG on noise-free rollouts") {
  Rng rng(15);
  const auto rs = random_system(rng, 3, 1, 2, 1.1, 0.01);
  HinfPolicy h(std::get<HinfController>(solve_hinf_central(rs.sys, rs.reward, 1e6)));
  LqgPolicy l(rs.sys, rs.reward);
  env::Environment e(testutil::linear_task(rs.sys.A, rs.sys.B2, rs.sys.C, 0.0, 30));
  const auto tl = env::run_episode(e, l, 3, 0);
  h.reset(0);
  for (int t = 0; t < tl.length(); ++t) {
    const Vec a = h.act(tl.obs.row(t).transpose());
    const Vec ref = tl.act.row(t).transpose();
    CHECK((a - ref).norm() <= 1e-3 * std::max(ref.norm(), 1e-6));
  }
}

TEST_CASE("static gain: zero iterations keep the initial gain") {
  Rng rng(16);
  const auto task = testutil::linear_task(scalar(0.9), scalar(1), scalar(1), 0.01, 10);
  StaticGain g{scalar(0.3), scalar_vec(0.1)};
  SearchConfig cfg;
  cfg.iterations = 0;
  const auto res = fit_static_gain(task, cfg, &g);
  CHECK(res.expert.F == g.F);
  CHECK(res.expert.bias == g.bias);
  CHECK(res.trace.size() == 1);
}

TEST_CASE("static gain: incumbent score never decreases and the search is deterministic") {
  Rng rng(17);
  const auto rs = random_system(rng, 3, 1, 2, 1.05, 0.0);
  const auto task = testutil::linear_task(rs.sys.A, rs.sys.B2, rs.sys.C, 0.0, 20);
  SearchConfig cfg;
  cfg.iterations = 25;
  cfg.population = 16;
  cfg.seed = 4;
  const auto a = fit_static_gain(task, cfg);
  for (std::size_t i = 1; i < a.trace.size(); ++i) CHECK(a.trace[i].mean_return >= a.trace[i - 1].mean_return);
  cfg.jobs = 3;
  const auto b = fit_static_gain(task, cfg);
  CHECK(a.expert.F == b.expert.F);
  CHECK(a.expert.bias == b.expert.bias);
  std::ostringstream ca, cb;
  write_trace_csv(ca, a.trace);
  write_trace_csv(cb, b.trace);
  CHECK(ca.str() == cb.str());
  CHECK(ca.str().rfind("iteration,mean_return,best_return\n", 0) == 0);
  // The medium gain is the first incumbent at 25% of the improvement.
  const double first = a.trace.front().mean_return, last = a.trace.back().mean_return;
  CHECK(a.trace[a.medium_iteration].mean_return >= first + 0.25 * (last - first));
  if (a.medium_iteration > 0) CHECK(a.trace[a.medium_iteration - 1].mean_return < first + 0.25 * (last - first));
}

TEST_CASE("static gain: scalar search matches a dense grid optimum") {
  const auto task = testutil::linear_task(scalar(1.1), scalar(1.0), scalar(1.0), 0.0, 20);
  const int episodes = 4;
  SearchConfig cfg;
  cfg.iterations = 80;
  cfg.population = 24;
  cfg.episodes_per_eval = episodes;
  cfg.seed = 9;
  cfg.patience = 0;
  const auto res = fit_static_gain(task, cfg);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 1);
  // The return is quadratic in the bias for a fixed F: minimise it exactly.
  double best = -1e300, best_f = 0, best_b = 0;
  for (int i = 0; i <= 3000; ++i) {
    const double f = 0.0 + 1.5 * i / 3000;
    auto J = [&](double b) { return evaluate_gain(task, {scalar(f), scalar_vec(b)}, episodes, eval_seed); };
    const double jm = J(-1), j0 = J(0), jp = J(1);
    const double curv = 0.5 * (jp + jm) - j0, slope = 0.5 * (jp - jm);
    const double b = -slope / (2 * curv);
    const double val = J(b);
    if (val > best) {
      best = val;
      best_f = f;
      best_b = b;
    }
  }
  CHECK(std::abs(res.expert.F(0, 0) - best_f) <= 1e-2);
  CHECK(std::abs(res.expert.bias[0] - best_b) <= 1e-2);
  CHECK(res.trace.back().mean_return >= best - 1e-4 * std::abs(best));
}

TEST_CASE("static gain: json round trip and noisy policy") {
  const StaticGain g{Mat::Constant(2, 3, 0.25), Vec::Constant(2, -1.0)};
  const StaticGain back = static_gain_from_json(static_gain_to_json(g));
  CHECK(back.F == g.F);
  CHECK(back.bias == g.bias);
  StaticGainPolicy p(g, 0.5), q(g, 0.5);
  p.reset(3);
  q.reset(3);
  const Vec o = Vec::Ones(3);
  const Vec a = p.act(o);
  CHECK(a == q.act(o));
  CHECK(a != g.apply(o));
}
