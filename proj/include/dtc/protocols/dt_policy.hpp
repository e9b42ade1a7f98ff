#pragma once

#include <memory>
#include <vector>

#include "dtc/env/policy.hpp"
#include "dtc/model/checkpoint.hpp"

namespace dtc::protocols {

/// Return-prompted transformer controller. The prompt starts at the target
/// return and drops by each received reward; the last K (prompt, observation,
/// action) positions form the context, with the current action slot zero.
class DtPolicy final : public env::Policy {
 public:
  DtPolicy(std::shared_ptr<const model::Checkpoint> checkpoint, double target_return);

  void reset(std::uint64_t seed) override;
  Vec act(const Vec& obs) override;
  void feedback(double reward) override;
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<DtPolicy>(*this); }
  std::string name() const override { return "dt"; }

  /// Prompt fed at each step of the current episode.
  const std::vector<double>& prompts() const { return prompts_; }
  const model::Checkpoint& checkpoint() const { return *ckpt_; }

 private:
  std::shared_ptr<const model::Checkpoint> ckpt_;
  double target_;
  double prompt_ = 0.0;
  std::vector<double> prompts_;
  std::vector<Vec> obs_;
  std::vector<Vec> act_;
};

/// Throws ValidationError naming both shapes when the checkpoint's n_o/n_a
/// differ from the task's.
void check_dims(const model::ModelConfig& cfg, const env::TaskSpec& task);

}  // namespace dtc::protocols
