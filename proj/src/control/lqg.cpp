#include "dtc/control/lqg.hpp"

#include <algorithm>

namespace dtc::control {

LqgPolicy::LqgPolicy(env::LinearSystemSpec sys, const env::RewardSpec& reward, bool finite_horizon)
    : sys_(std::move(sys)), s_r_(reward.s_r()), finite_(finite_horizon) {
  sys_.validate();
  require(reward.n_s() == sys_.n_s() && reward.n_a() == sys_.n_a(), "LqgPolicy: reward dimensions differ");
  const Horizon h = finite_ ? Horizon::finite(sys_.n_steps) : Horizon::infinite();
  lqr_ = solve_lqr(sys_.A, sys_.B2, reward.q1(), reward.q2(), reward.q3(), h);
  reset(0);
}

const Mat& LqgPolicy::gain(int t) const {
  if (!finite_) return lqr_.K;
  return lqr_.gains[static_cast<std::size_t>(std::clamp(t, 0, sys_.n_steps - 1))];
}

void LqgPolicy::reset(std::uint64_t) {
  kstate_ = kalman_prior(sys_);
  last_action_.resize(0);
  t_ = 0;
}

Vec LqgPolicy::act(const Vec& obs) {
  kstate_ = t_ == 0 ? kalman_update(kstate_, obs, sys_) : kalman_step(kstate_, last_action_, obs, sys_);
  last_action_ = -gain(t_) * (kstate_.x_hat - s_r_);
  ++t_;
  return last_action_;
}

Vec lqg_policy(const std::vector<Vec>& obs, const std::vector<Vec>& actions,
               const env::LinearSystemSpec& sys, const env::RewardSpec& reward) {
  require(!obs.empty() && actions.size() + 1 == obs.size(),
          "lqg_policy: need t+1 observations and t actions");
  const RiccatiSolution lqr =
      solve_lqr(sys.A, sys.B2, reward.q1(), reward.q2(), reward.q3(), Horizon::infinite());
  KalmanState k = kalman_update(kalman_prior(sys), obs[0], sys);
  for (std::size_t t = 1; t < obs.size(); ++t) k = kalman_step(k, actions[t - 1], obs[t], sys);
  return -lqr.K * (k.x_hat - reward.s_r());
}

}  // namespace dtc::control
