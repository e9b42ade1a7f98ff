#include "dtc/env/environment.hpp"

#include <cmath>
#include <numbers>

namespace dtc::env {
namespace {

void check_step(const EnvState& state, int n_steps, const Vec& a, int n_a) {
  if (state.t >= n_steps)
    throw ContractViolation("step called after the episode finished (t = " +
                            std::to_string(state.t) + ")");
  if (a.size() != n_a)
    throw ContractViolation("action has length " + std::to_string(a.size()) + ", expected " +
                            std::to_string(n_a));
}

StepResult linear_step_inplace(EnvState& st, const Vec& a, const LinearSystemSpec& sys,
                               const RewardSpec& reward_spec) {
  check_step(st, sys.n_steps, a, sys.n_a());
  StepResult out;
  out.reward = reward(st.s, a, reward_spec);
  const double sd = std::sqrt(sys.noise_cov);
  Vec next = sys.A * st.s + sys.B2 * a;
  next += st.rng.normal_vector(sys.n_s(), sd);
  if (!next.allFinite()) throw DivergenceFault("non-finite linear state", st.t);
  out.obs = sys.C * next;
  out.obs += st.rng.normal_vector(sys.n_o(), sd);
  st.s = std::move(next);
  ++st.t;
  out.done = st.t >= sys.n_steps;
  return out;
}

StepResult pde_step_inplace(EnvState& st, const Vec& a, const PdeSpec& spec,
                            const RewardSpec& reward_spec, const Mat& actuation) {
  check_step(st, spec.n_steps, a, spec.n_a);
  require(st.s.size() == spec.n_s, "pde_step: field length does not match n_s");
  StepResult out;
  out.reward = reward(st.s, a, reward_spec);
  Vec u = st.s;
  advance_field_at(u, a, spec, actuation, st.t);
  if (spec.process_noise_cov > 0.0) u += st.rng.normal_vector(spec.n_s, std::sqrt(spec.process_noise_cov));
  if (!u.allFinite() || u.cwiseAbs().maxCoeff() > spec.divergence_bound)
    throw DivergenceFault("PDE field out of bounds", st.t);
  out.obs = observe_field(u, spec, st.rng);
  st.s = std::move(u);
  ++st.t;
  out.done = st.t >= spec.n_steps;
  return out;
}

}  // namespace

std::pair<EnvState, StepResult> linear_step(const EnvState& state, const Vec& a,
                                            const LinearSystemSpec& sys,
                                            const RewardSpec& reward_spec) {
  EnvState next = state;
  StepResult r = linear_step_inplace(next, a, sys, reward_spec);
  return {std::move(next), std::move(r)};
}

std::pair<EnvState, StepResult> pde_step(const EnvState& state, const Vec& a,
                                         const PdeSpec& spec, const RewardSpec& reward_spec) {
  EnvState next = state;
  const Mat actuation = make_actuation_matrix(spec.n_s, spec.n_a, spec.phi, spec.L);
  StepResult r = pde_step_inplace(next, a, spec, reward_spec, actuation);
  return {std::move(next), std::move(r)};
}

EnvState reset(const TaskSpec& task, std::uint64_t seed) {
  EnvState st;
  st.rng = Rng(seed);
  st.t = 0;
  if (task.is_linear()) {
    const auto& sys = task.linear();
    st.s = st.rng.normal_vector(sys.n_s(), sys.init_std);
  } else {
    const auto& spec = task.pde();
    const Vec x = grid_points(spec.n_s, spec.L);
    st.s = Vec::Zero(spec.n_s);
    for (int m = 1; m <= 4; ++m) {
      const double alpha = st.rng.normal(0.0, 0.1);
      const double beta = st.rng.normal(0.0, 0.1);
      const double k = 2.0 * std::numbers::pi * m / spec.L;
      for (int i = 0; i < spec.n_s; ++i) st.s[i] += alpha * std::sin(k * x[i]) + beta * std::cos(k * x[i]);
    }
  }
  return st;
}

Vec observe(const TaskSpec& task, EnvState& state) {
  if (task.is_linear()) {
    const auto& sys = task.linear();
    Vec o = sys.C * state.s;
    o += state.rng.normal_vector(sys.n_o(), std::sqrt(sys.noise_cov));
    return o;
  }
  return observe_field(state.s, task.pde(), state.rng);
}

Environment::Environment(TaskSpec task) : task_(std::move(task)) {
  task_.validate();
  if (!task_.is_linear()) {
    const auto& p = task_.pde();
    actuation_ = make_actuation_matrix(p.n_s, p.n_a, p.phi, p.L);
  }
}

Vec Environment::reset(std::uint64_t seed) {
  state_ = env::reset(task_, seed);
  return observe(task_, state_);
}

StepResult Environment::step(const Vec& a) {
  if (task_.is_linear()) return linear_step_inplace(state_, a, task_.linear(), task_.reward);
  return pde_step_inplace(state_, a, task_.pde(), task_.reward, actuation_);
}

}  // namespace dtc::env
