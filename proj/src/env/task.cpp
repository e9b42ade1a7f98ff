#include "dtc/env/task.hpp"

namespace dtc::env {

const LinearSystemSpec& TaskSpec::linear() const {
  require(is_linear(), "task '" + task_id + "' is not a linear task");
  return std::get<LinearSystemSpec>(env);
}

const PdeSpec& TaskSpec::pde() const {
  require(!is_linear(), "task '" + task_id + "' is not a PDE task");
  return std::get<PdeSpec>(env);
}

LinearSystemSpec& TaskSpec::linear() {
  require(is_linear(), "task '" + task_id + "' is not a linear task");
  return std::get<LinearSystemSpec>(env);
}

PdeSpec& TaskSpec::pde() {
  require(!is_linear(), "task '" + task_id + "' is not a PDE task");
  return std::get<PdeSpec>(env);
}

int TaskSpec::n_s() const { return is_linear() ? linear().n_s() : pde().n_s; }
int TaskSpec::n_a() const { return is_linear() ? linear().n_a() : pde().n_a; }
int TaskSpec::n_o() const { return is_linear() ? linear().n_o() : pde().n_o; }
int TaskSpec::n_steps() const { return is_linear() ? linear().n_steps : pde().n_steps; }

void TaskSpec::validate() const {
  require(!task_id.empty(), "TaskSpec: task_id must be non-empty");
  if (is_linear()) {
    linear().validate();
  } else {
    pde().validate();
  }
  require(reward.n_s() == n_s(), "TaskSpec '" + task_id + "': reward Q1 is " +
                                     std::to_string(reward.n_s()) + "x" + std::to_string(reward.n_s()) +
                                     " but the state has dimension " + std::to_string(n_s()));
  require(reward.n_a() == n_a(), "TaskSpec '" + task_id + "': reward Q2 does not match n_a");
}

}  // namespace dtc::env
