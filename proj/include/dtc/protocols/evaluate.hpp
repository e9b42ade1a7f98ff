#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dtc/data/anchors.hpp"
#include "dtc/env/policy.hpp"
#include "dtc/model/checkpoint.hpp"

namespace dtc::protocols {

struct EvalConfig {
  int episodes = 20;
  double target_return = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::pair<double, double>> score_cap;
  /// Keep per-step rewards (and prompts for return-prompted policies).
  bool record_steps = false;
  int jobs = 1;

  void validate() const;
};

nlohmann::json eval_config_to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {});

/// Upper end of the standard target-return range for a builtin task name
/// (he1, ac4, cm3, cdr, burgers), matched on the task id prefix.
std::optional<double> default_target_return(const std::string& task_id);

struct EpisodeResult {
  double ret = 0.0;
  bool faulted = false;
  int fault_step = -1;
  int length = 0;
  std::vector<double> rewards;
  std::vector<double> prompts;
};

/// Evaluation of one method on one task.
struct TaskEval {
  std::string task_id;
  std::string protocol;  // single, zero_shot, k_shot(k), hinf, bc
  std::string method;    // demonstrator, bc, dt, hinf, ...
  std::string dataset;   // training data the method saw; empty when none
  std::string split;     // in_dist / out_dist for generalization tests, else empty
  nlohmann::json provenance;
  std::vector<EpisodeResult> episodes;
  std::optional<data::NormalizationAnchors> anchors;
  std::optional<std::pair<double, double>> score_cap;

  std::vector<double> returns() const;
  /// Per-episode normalized scores; empty without anchors.
  std::vector<double> scores() const;
  double mean_return() const;
  double std_return() const;
  /// Mean normalized score, clamped to the cap when one is set.
  double score_mean() const;
  /// Spread of the uncapped per-episode scores.
  double score_std() const;
  int n_faulted() const;
};

/// Mean and sample standard deviation (0 for fewer than two values).
std::pair<double, double> mean_std(const std::vector<double>& v);

struct EvalReport {
  std::string protocol;
  std::vector<TaskEval> rows;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json task_eval_to_json(const TaskEval& e);
TaskEval task_eval_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// One line per row: task_id,protocol,method,dataset,split,episodes,faulted,mean_return,std_return,score_mean,score_std.
void write_rows_csv(std::ostream& out, const EvalReport& r);

/// Runs cfg.episodes episodes. Episode i uses environment seed
/// derive_seed(seed, 2i) and policy seed derive_seed(seed, 2i+1), the same
/// seeding as data::mean_return. Episodes run on up to cfg.jobs threads, each
/// with its own clone of `policy`; results are stored in episode order.
/// A diverging episode keeps the return accumulated up to the fault and is flagged.
TaskEval evaluate_policy(const env::TaskSpec& task, const env::Policy& policy, const EvalConfig& cfg,
                         const std::optional<data::NormalizationAnchors>& anchors);

/// evaluate_policy with a return-prompted transformer policy starting from
/// cfg.target_return. Rejects checkpoints whose dimensions differ from the task's.
TaskEval rollout_dt(std::shared_ptr<const model::Checkpoint> checkpoint, const env::TaskSpec& task,
                    const EvalConfig& cfg, const std::optional<data::NormalizationAnchors>& anchors);

}  // namespace dtc::protocols
