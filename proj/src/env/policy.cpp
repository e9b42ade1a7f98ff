#include "dtc/env/policy.hpp"

namespace dtc::env {

data::Trajectory run_episode(Environment& env, Policy& policy, std::uint64_t env_seed,
                             std::uint64_t policy_seed, std::vector<Vec>* states) {
  const TaskSpec& task = env.task();
  const int n = task.n_steps();
  data::Trajectory traj;
  traj.task_id = task.task_id;
  traj.obs.resize(n, task.n_o());
  traj.act.resize(n, task.n_a());
  traj.rew.resize(n);

  Vec o = env.reset(env_seed);
  policy.reset(policy_seed);
  if (states) {
    states->clear();
    states->push_back(env.state().s);
  }
  int t = 0;
  try {
    for (; t < n; ++t) {
      Vec a = policy.act(o);
      if (a.size() != task.n_a())
        throw ContractViolation("policy '" + policy.name() + "' returned an action of length " +
                                std::to_string(a.size()));
      traj.obs.row(t) = o.transpose();
      traj.act.row(t) = a.transpose();
      StepResult r = env.step(a);
      traj.rew[t] = r.reward;
      if (states) states->push_back(env.state().s);
      policy.feedback(r.reward);
      o = std::move(r.obs);
    }
  } catch (const DivergenceFault& f) {
    traj.faulted = true;
    traj.fault_step = f.step();
    // The faulting step's reward was evaluated on the pre-transition state.
    traj.rew[t] = reward(env.state().s, traj.act.row(t).transpose(), task.reward);
    ++t;
    traj.obs.conservativeResize(t, Eigen::NoChange);
    traj.act.conservativeResize(t, Eigen::NoChange);
    traj.rew.conservativeResize(t);
  }
  return traj;
}

}  // namespace dtc::env
