#include "dtc/env/reward.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace dtc::env {
namespace {

bool is_symmetric(const Mat& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

RewardSpec::RewardSpec(Mat q1, Mat q2, Mat q3, Vec s_r)
    : q1_(std::move(q1)), q2_(std::move(q2)), q3_(std::move(q3)), s_r_(std::move(s_r)) {
  require(q1_.rows() == q1_.cols() && q1_.rows() > 0, "RewardSpec: Q1 must be square and non-empty");
  require(q2_.rows() == q2_.cols() && q2_.rows() > 0, "RewardSpec: Q2 must be square and non-empty");
  require(q3_.rows() == q1_.rows() && q3_.cols() == q2_.rows(), "RewardSpec: Q3 must be n_s x n_a");
  require(s_r_.size() == q1_.rows(), "RewardSpec: s_r must have length n_s");
  require(q1_.allFinite() && q2_.allFinite() && q3_.allFinite() && s_r_.allFinite(),
          "RewardSpec: non-finite weight");
  require(is_symmetric(q1_), "RewardSpec: Q1 must be symmetric");
  require(is_symmetric(q2_), "RewardSpec: Q2 must be symmetric");

  Eigen::SelfAdjointEigenSolver<Mat> e1(q1_, Eigen::EigenvaluesOnly);
  const double tol1 = 1e-10 * std::max(1.0, q1_.cwiseAbs().maxCoeff());
  require(e1.eigenvalues().minCoeff() >= -tol1, "RewardSpec: Q1 must be positive semidefinite");
  Eigen::SelfAdjointEigenSolver<Mat> e2(q2_, Eigen::EigenvaluesOnly);
  require(e2.eigenvalues().minCoeff() > 0.0, "RewardSpec: Q2 must be positive definite");
}

RewardSpec RewardSpec::diagonal(int n_s, int n_a, double q, double r) {
  return RewardSpec(q * Mat::Identity(n_s, n_s), r * Mat::Identity(n_a, n_a), Mat::Zero(n_s, n_a),
                    Vec::Zero(n_s));
}

double reward(const Vec& s, const Vec& a, const RewardSpec& spec) {
  if (s.size() != spec.n_s())
    throw ContractViolation("reward: state has length " + std::to_string(s.size()) +
                            ", expected " + std::to_string(spec.n_s()));
  if (a.size() != spec.n_a())
    throw ContractViolation("reward: action has length " + std::to_string(a.size()) +
                            ", expected " + std::to_string(spec.n_a()));
  const Vec e = s - spec.s_r();
  return -e.dot(spec.q1() * e) - a.dot(spec.q2() * a) - 2.0 * e.dot(spec.q3() * a);
}

}  // namespace dtc::env
