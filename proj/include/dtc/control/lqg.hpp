#pragma once

#include <vector>

#include "dtc/control/kalman.hpp"
#include "dtc/control/riccati.hpp"
#include "dtc/env/policy.hpp"
#include "dtc/env/reward.hpp"

namespace dtc::control {

/// Certainty-equivalent LQG: Kalman estimate from the design model `sys`,
/// action a = -K_t (x_hat - s_r). With a finite horizon the gains are
/// stage-indexed over sys.n_steps; otherwise the stationary gain is used.
class LqgPolicy final : public env::Policy {
 public:
  LqgPolicy(env::LinearSystemSpec sys, const env::RewardSpec& reward, bool finite_horizon = false);

  void reset(std::uint64_t seed) override;
  Vec act(const Vec& obs) override;
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<LqgPolicy>(*this); }
  std::string name() const override { return "lqg"; }

  const KalmanState& estimate() const { return kstate_; }
  const Mat& gain(int t) const;

 private:
  env::LinearSystemSpec sys_;
  Vec s_r_;
  RiccatiSolution lqr_;
  bool finite_;
  KalmanState kstate_;
  Vec last_action_;
  int t_ = 0;
};

/// Action after processing the history in order: obs[0..t] and actions[0..t-1].
Vec lqg_policy(const std::vector<Vec>& obs, const std::vector<Vec>& actions,
               const env::LinearSystemSpec& sys, const env::RewardSpec& reward);

}  // namespace dtc::control
