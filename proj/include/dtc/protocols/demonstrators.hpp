#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "json.hpp"

#include "dtc/control/static_gain.hpp"
#include "dtc/data/anchors.hpp"
#include "dtc/env/task.hpp"

namespace dtc::protocols {

/// Converged and early-stopped static output-feedback demonstrators. Each
/// acts stochastically, a = -F o + bias + N(0, sigma^2 I), in raw action
/// units. The medium policy keeps the unit exploration std a Gaussian policy
/// starts from; the converged expert has annealed it to a tenth.
struct DemonstratorConfig {
  control::SearchConfig search;
  double expert_noise = 0.1;
  double medium_noise = 1.0;
  int anchor_episodes = 100;
  std::uint64_t seed = 0;
};

nlohmann::json demonstrator_config_to_json(const DemonstratorConfig& c);
DemonstratorConfig demonstrator_config_from_json(const nlohmann::json& j, DemonstratorConfig base = {});

struct Demonstrators {
  std::string task_id;
  control::StaticGain expert;
  control::StaticGain medium;
  double expert_noise_std = 0.0;  // absolute action noise
  double medium_noise_std = 0.0;
  int medium_iteration = 0;
  /// Mean returns of the two stochastic demonstrators.
  data::NormalizationAnchors anchors{1.0, 0.0};
  std::vector<control::TracePoint> trace;

  std::unique_ptr<env::Policy> policy(const std::string& role) const;
};

/// Fits both gains by static-gain search on `task` and measures the anchors
/// over cfg.anchor_episodes episodes of each stochastic demonstrator. Throws ValidationError when the expert does not beat the medium.
Demonstrators fit_demonstrators(const env::TaskSpec& task, const DemonstratorConfig& cfg);

nlohmann::json demonstrators_to_json(const Demonstrators& d);
Demonstrators demonstrators_from_json(const nlohmann::json& j);

}  // namespace dtc::protocols
