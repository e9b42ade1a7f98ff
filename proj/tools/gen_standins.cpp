// Generates the stand-in linear systems shipped under data/systems/.
//
//   gen_standins <output-dir> [--seed N]
//
// Each system is a seeded continuous-time model discretized by zero-order hold.
// The reward weights are Q1 = c I (cm3: c (C'C + 0.01 I)), Q2 = c I, with c chosen so a fitted
// static output-feedback expert scores roughly 1.5x the task's target return.

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dtc/control/static_gain.hpp"
#include "dtc/env/io.hpp"
#include "dtc/env/linear.hpp"

using namespace dtc;

namespace {

struct Continuous {
  Mat A, B, C;
};

std::pair<Mat, Mat> zoh(const Mat& A, const Mat& B, double dt) {
  const auto n = A.rows(), m = B.cols();
  Mat M = Mat::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = A * dt;
  M.topRightCorner(n, m) = B * dt;
  const Mat E = M.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

Mat gaussian(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

// Real matrix with prescribed eigenvalues (complex ones given by their upper
// half-plane member) under a random similarity with condition number ~ few.
Mat with_spectrum(Rng& rng, const std::vector<std::complex<double>>& eig) {
  int n = 0;
  for (const auto& z : eig) n += z.imag() == 0.0 ? 1 : 2;
  Mat D = Mat::Zero(n, n);
  int k = 0;
  for (const auto& z : eig) {
    if (z.imag() == 0.0) {
      D(k, k) = z.real();
      ++k;
    } else {
      D(k, k) = D(k + 1, k + 1) = z.real();
      D(k, k + 1) = z.imag();
      D(k + 1, k) = -z.imag();
      k += 2;
    }
  }
  const Mat V = Mat::Identity(n, n) + 0.3 * gaussian(rng, n, n);
  return V * D * V.inverse();
}

Continuous he1_like(Rng& rng) {
  Continuous s;
  s.A = with_spectrum(rng, {{0.2, 0.0}, {-0.5, 1.5}, {-2.0, 0.0}});
  s.B = gaussian(rng, 4, 2);
  s.C = gaussian(rng, 1, 4);
  return s;
}

Continuous ac4_like(Rng& rng) {
  Continuous s;
  s.A = with_spectrum(rng, {{0.05, 0.0}, {-0.1, 2.0}, {-0.5, 0.8}, {-0.2, 0.0}, {-1.0, 0.0}, {-3.0, 0.0}, {-5.0, 0.0}});
  s.B = gaussian(rng, 9, 1);
  s.C = gaussian(rng, 2, 9);
  return s;
}

// Damped chain of 60 unit masses with fixed ends, force on the first mass,
// position and velocity of that mass measured. State = (positions, velocities).
Continuous cm3_like(Rng& rng) {
  const int m = 60;
  const double k = 1.0, c = 0.05;
  Mat L = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    L(i, i) = 2.0;
    if (i > 0) L(i, i - 1) = -1.0;
    if (i + 1 < m) L(i, i + 1) = -1.0;
  }
  // Small seeded spread of the spring constants.
  Vec stiff(m);
  for (int i = 0; i < m; ++i) stiff[i] = k * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  const Mat K = stiff.asDiagonal() * L;
  Continuous s;
  s.A = Mat::Zero(2 * m, 2 * m);
  s.A.topRightCorner(m, m) = Mat::Identity(m, m);
  s.A.bottomLeftCorner(m, m) = -K;
  s.A.bottomRightCorner(m, m) = -c * L;
  s.B = Mat::Zero(2 * m, 1);
  s.B(m, 0) = 1.0;
  s.C = Mat::Zero(2, 2 * m);
  s.C(0, 0) = 1.0;
  s.C(1, m) = 1.0;
  return s;
}

struct Recipe {
  std::string name;
  Continuous (*make)(Rng&);
  double dt;
  double target;  // inference target return
  bool output_cost;  // Q1 = C'C + 0.01 I instead of I
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: gen_standins <output-dir> [--seed N]\n";
    return 1;
  }
  const std::filesystem::path out_dir = argv[1];
  std::uint64_t seed = 20240601;
  if (argc >= 4 && std::string(argv[2]) == "--seed") seed = std::stoull(argv[3]);
  std::filesystem::create_directories(out_dir);

  const std::vector<Recipe> recipes{
      {"he1", he1_like, 0.1, -10.0, false}, {"ac4", ac4_like, 0.05, -0.1, false}, {"cm3", cm3_like, 0.25, -5.0, true}};

  std::uint64_t stream = 0;
  for (const auto& r : recipes) {
    Rng rng(derive_seed(seed, stream++));
    env::LinearSystemSpec sys;
    for (int attempt = 0;; ++attempt) {
      const Continuous c = r.make(rng);
      auto [Ad, Bd] = zoh(c.A, c.B, r.dt);
      sys = {Ad, Bd, c.C, 0.01, 50, 1.0};
      if (env::is_stabilizable(sys.A, sys.B2) && env::is_detectable(sys.A, sys.C)) break;
      if (attempt > 100) {
        std::cerr << r.name << ": no stabilizable/detectable draw\n";
        return 2;
      }
    }

    Mat q1 = Mat::Identity(sys.n_s(), sys.n_s());
    if (r.output_cost) q1 = sys.C.transpose() * sys.C + 0.01 * q1;
    const Mat q2 = Mat::Identity(sys.n_a(), sys.n_a());
    const Mat q3 = Mat::Zero(sys.n_s(), sys.n_a());
    const Vec s_r = Vec::Zero(sys.n_s());
    env::TaskSpec task{r.name, sys, env::RewardSpec(q1, q2, q3, s_r), env::Nominal{}};
    control::SearchConfig cfg;
    cfg.seed = derive_seed(seed, 100 + stream);
    const auto fit = control::fit_static_gain(task, cfg);
    const double j_unit = control::evaluate_gain(task, fit.expert, 100, derive_seed(seed, 200 + stream));
    const double scale = 1.5 * r.target / j_unit;
    const env::RewardSpec reward(scale * q1, scale * q2, q3, s_r);

    std::ofstream out(out_dir / (r.name + ".json"));
    out << env::linear_file_to_json(sys, reward).dump() << '\n';
    std::printf("%s: n_s=%d n_a=%d n_o=%d rho(A)=%.4f J_unit=%.6g scale=%.6g\n", r.name.c_str(), sys.n_s(),
                sys.n_a(), sys.n_o(), Eigen::EigenSolver<Mat>(sys.A, false).eigenvalues().cwiseAbs().maxCoeff(),
                j_unit, scale);
  }
  return 0;
}
