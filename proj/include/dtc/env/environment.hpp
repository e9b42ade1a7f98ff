#pragma once

#include <cstdint>
#include <utility>

#include "dtc/env/task.hpp"

namespace dtc::env {

struct EnvState {
  Vec s;
  int t = 0;
  Rng rng;
};

struct StepResult {
  Vec obs;
  double reward = 0.0;
  bool done = false;
};

/// Reward is evaluated on (s, a) before the transition.
std::pair<EnvState, StepResult> linear_step(const EnvState& state, const Vec& a,
                                            const LinearSystemSpec& sys,
                                            const RewardSpec& reward_spec);

std::pair<EnvState, StepResult> pde_step(const EnvState& state, const Vec& a,
                                         const PdeSpec& spec, const RewardSpec& reward_spec);

/// Initial state: N(0, init_std^2 I) for linear tasks, a random combination of
/// the first four Fourier modes (coefficients N(0, 0.1^2)) for PDE tasks.
EnvState reset(const TaskSpec& task, std::uint64_t seed);

/// Draws the observation of the current state (used for o_0 after reset).
Vec observe(const TaskSpec& task, EnvState& state);

/// Stateful wrapper used by rollouts. Not thread-safe; one instance per thread.
class Environment {
 public:
  explicit Environment(TaskSpec task);

  /// Resets to a seeded initial state and returns o_0.
  Vec reset(std::uint64_t seed);
  StepResult step(const Vec& a);

  const TaskSpec& task() const { return task_; }
  const EnvState& state() const { return state_; }
  bool done() const { return state_.t >= task_.n_steps(); }

 private:
  TaskSpec task_;
  EnvState state_;
  Mat actuation_;
};

}  // namespace dtc::env
