#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dtc/env/linear.hpp"
#include "dtc/env/pde.hpp"
#include "dtc/env/reward.hpp"

namespace dtc::env {

struct Nominal {};

/// A + dA, B2 + dB with dA, dB Gaussian and rescaled to the recorded
/// Frobenius norms. `seed` and the nominal task reproduce the perturbation.
struct Perturbed {
  std::string nominal_id;
  double delta_a_norm = 0.0;
  double delta_b_norm = 0.0;
  std::uint64_t seed = 0;
};

/// PDE parameters drawn by a sampler. `mode` is "train", "in_dist" or
/// "out_dist:<index>".
struct Sampled {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> params;
};

using Provenance = std::variant<Nominal, Perturbed, Sampled>;

/// A fully resolved control task.
struct TaskSpec {
  std::string task_id;
  std::variant<LinearSystemSpec, PdeSpec> env;
  RewardSpec reward;
  Provenance provenance = Nominal{};

  bool is_linear() const { return std::holds_alternative<LinearSystemSpec>(env); }
  const LinearSystemSpec& linear() const;
  const PdeSpec& pde() const;
  LinearSystemSpec& linear();
  PdeSpec& pde();

  int n_s() const;
  int n_a() const;
  int n_o() const;
  int n_steps() const;

  void validate() const;
};

}  // namespace dtc::env
