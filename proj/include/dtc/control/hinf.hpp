#pragma once

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dtc/env/policy.hpp"
#include "dtc/env/reward.hpp"

namespace dtc::control {

/// Central output-feedback controller for attenuation level gamma. Disturbances
/// enter through sigma I on both the state and the measurement channel,
/// sigma = sqrt(noise_cov); the cross weight Q3 is folded into the state weight
/// (Q_tilde = Q1 - Q3 Q2^-1 Q3', A_tilde = A - B2 Q2^-1 Q3').
///
///   control:    M = Q_tilde + A_tilde' M (I + (B2 Q2^-1 B2' - gamma^-2 sigma^2 I) M)^-1 A_tilde
///   estimation: S+ = (S-^-1 + C'V^-1 C - gamma^-2 Q_tilde)^-1,  S-_next = A S+ A' + W
///   action:     a = -K (I - gamma^-2 S+ M)^-1 (x+ - s_r)
///
/// Only feasible controllers can be constructed (see solve_hinf_central).
struct HinfController {
  double gamma = 0.0;
  env::LinearSystemSpec sys;
  Vec s_r;
  Mat M;           // control Riccati solution
  Mat K;           // a = -K x in the original input coordinates
  Mat Q_tilde;
  Mat Sigma_prior; // stationary a-priori estimation covariance
  Mat Sigma_post;  // stationary a-posteriori covariance
  /// Time-varying a-posteriori covariances from the prior init_std^2 I; the
  /// stationary value applies past the end.
  std::vector<Mat> Sigma_post_schedule;
  double spectral_radius = 0.0;  // rho(Sigma_post M) at the worst step
};

struct HinfInfeasible {
  double gamma = 0.0;
  std::string reason;
};

using HinfResult = std::variant<HinfController, HinfInfeasible>;

HinfResult solve_hinf_central(const env::LinearSystemSpec& sys, const env::RewardSpec& reward, double gamma);

/// Bracket [infeasible, feasible] of the attenuation threshold with width <= tol,
/// found by bisection on feasibility between `lo` (must be infeasible) and `hi`
/// (must be feasible).
struct GammaBracket {
  double infeasible = 0.0;
  double feasible = 0.0;
  int iterations = 0;
};
GammaBracket bisect_hinf_threshold(const env::LinearSystemSpec& sys, const env::RewardSpec& reward,
                                   double lo, double hi, double tol = 1e-3);

class HinfPolicy final : public env::Policy {
 public:
  explicit HinfPolicy(HinfController controller);

  void reset(std::uint64_t seed) override;
  Vec act(const Vec& obs) override;
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<HinfPolicy>(*this); }
  std::string name() const override { return "hinf"; }
  const HinfController& controller() const { return c_; }

 private:
  HinfController c_;
  Mat CtVinv_;
  Vec x_bar_;
  Vec last_action_;
  int t_ = 0;
};

nlohmann::json hinf_to_json(const HinfController& c);

}  // namespace dtc::control
