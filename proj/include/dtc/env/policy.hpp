#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dtc/data/trajectory.hpp"
#include "dtc/env/environment.hpp"

namespace dtc::env {

/// A controller that maps the observation history to actions. Implementations
/// keep whatever history they need between calls; one instance per episode stream.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Starts a new episode. `seed` drives any policy-side randomness.
  virtual void reset(std::uint64_t seed) = 0;
  /// Action for the latest observation.
  virtual Vec act(const Vec& obs) = 0;
  /// Reward received for the last action.
  virtual void feedback(double /*reward*/) {}
  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual std::string name() const = 0;
};

/// a = 0 for every observation.
class ZeroPolicy final : public Policy {
 public:
  explicit ZeroPolicy(int n_a) : n_a_(n_a) {}
  void reset(std::uint64_t) override {}
  Vec act(const Vec&) override { return Vec::Zero(n_a_); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ZeroPolicy>(*this); }
  std::string name() const override { return "zero"; }

 private:
  int n_a_;
};

/// Runs one full episode. A divergence fault ends the episode early and is
/// recorded on the returned trajectory rather than thrown. When `states` is
/// given it receives the internal state after the reset and after every step.
data::Trajectory run_episode(Environment& env, Policy& policy, std::uint64_t env_seed,
                             std::uint64_t policy_seed, std::vector<Vec>* states = nullptr);

}  // namespace dtc::env
