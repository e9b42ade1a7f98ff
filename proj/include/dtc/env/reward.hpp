#pragma once

#include "dtc/common.hpp"

namespace dtc::env {

/// Undiscounted returns are used everywhere (finite horizon).
inline constexpr double kDiscount = 1.0;

/// Weights of the negative quadratic tracking cost
///   r(s, a) = -(s - s_r)' Q1 (s - s_r) - a' Q2 a - 2 (s - s_r)' Q3 a.
/// The constructor checks symmetry, Q1 >= 0, Q2 > 0 and the dimensions.
class RewardSpec {
 public:
  RewardSpec(Mat q1, Mat q2, Mat q3, Vec s_r);

  /// Q1 = q*I, Q2 = r*I, Q3 = 0, s_r = 0.
  static RewardSpec diagonal(int n_s, int n_a, double q = 1.0, double r = 1.0);

  const Mat& q1() const { return q1_; }
  const Mat& q2() const { return q2_; }
  const Mat& q3() const { return q3_; }
  const Vec& s_r() const { return s_r_; }
  int n_s() const { return static_cast<int>(q1_.rows()); }
  int n_a() const { return static_cast<int>(q2_.rows()); }

 private:
  Mat q1_, q2_, q3_;
  Vec s_r_;
};

double reward(const Vec& s, const Vec& a, const RewardSpec& spec);

}  // namespace dtc::env
