#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dtc/data/tasks.hpp"
#include "dtc/protocols/bc.hpp"
#include "dtc/protocols/demonstrators.hpp"
#include "dtc/protocols/evaluate.hpp"
#include "dtc/protocols/train.hpp"

namespace dtc::protocols {

// ---- single task ---------------------------------------------------------

struct SingleTaskConfig {
  DemonstratorConfig demo;
  int n_traj = 1000;
  /// n_o, n_a and rtg_scale are filled in from the task and the data.
  model::ModelConfig model;
  TrainConfig train;
  BcConfig bc;
  EvalConfig eval;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct SingleTaskResult {
  Demonstrators demonstrators;
  std::map<std::string, model::Checkpoint> dt;  // keyed by dataset (expert, medium)
  std::map<std::string, BcModel> bc;
  std::map<std::string, std::vector<LossRow>> dt_log;
  EvalReport report;
};

/// Fits the demonstrators, collects an expert and a medium dataset, trains a
/// transformer and a behavior-cloning baseline on each and evaluates all of
/// them (and the demonstrators) on shared episode seeds. One report row per
/// (dataset, method).
SingleTaskResult run_single_task(const env::TaskSpec& task, const SingleTaskConfig& cfg);

/// One line per dataset: dataset,demonstrator_mean,demonstrator_std,bc_mean,bc_std,dt_mean,dt_std
/// (normalized scores).
void write_table1_csv(std::ostream& out, const EvalReport& r);

// ---- multi task ------------------------------------------------------------

struct MultiTaskConfig {
  int n_train = 30;
  int n_in = 9;
  int n_out = 9;
  int traj_per_task = 100;
  int k = 10;
  DemonstratorConfig demo;
  model::ModelConfig model;
  TrainConfig train;
  AdaptConfig adapt;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::optional<std::pair<data::PerturbationSizes, data::PerturbationSizes>> sizes_override;
  int jobs = 1;
};

struct MultiTaskResult {
  data::TaskSuite suite;
  std::map<std::string, Demonstrators> demonstrators;  // train and test tasks
  model::Checkpoint pretrained;
  std::vector<LossRow> log;
  EvalReport report;  // meta["cells"] holds the 2x2 aggregates
};

/// Trains one model on the pooled expert data of the training tasks, then for
/// every test task evaluates it as is (zero_shot) and after adapting fresh
/// adapters on k expert demonstrations (k_shot(k)). Both evaluations of a task
/// share episode seeds. Per-task anchors come from demonstrators fitted on
/// that task.
MultiTaskResult run_multitask(const env::TaskSpec& nominal, const MultiTaskConfig& cfg);

/// Mean and std over tasks of the per-task mean scores for each
/// (split, protocol) pair, in first-appearance order. Rows without a split are skipped.
nlohmann::json multitask_cells(const EvalReport& r);

/// split,protocol,n_tasks,score_mean,score_std.
void write_table2_csv(std::ostream& out, const EvalReport& r);

// ---- H-infinity comparison -------------------------------------------------

/// The standard robustness grid, 13 values from 0.5 to 1000.
std::vector<double> default_gamma_grid();

struct HinfComparisonConfig {
  std::vector<double> gammas = default_gamma_grid();
  EvalConfig eval;  // score_cap defaults to [-1, 2] in run_hinf_comparison when unset
  int jobs = 1;
};

struct GammaRow {
  double gamma = 0.0;
  bool feasible = false;
  std::string reason;      // infeasibility diagnostic
  double in_score = 0.0;   // mean over in-distribution tests of capped task scores
};

struct HinfComparisonResult {
  std::vector<GammaRow> grid;
  double selected_gamma = 0.0;
  EvalReport report;  // rows for the selected controller on every test
};

/// Synthesizes the central controller on the nominal system for each gamma,
/// scores the feasible ones on the in-distribution tests, keeps the best (the
/// first in grid order on ties) and evaluates it on the out-of-distribution
/// tests. Throws SolverFailure when no gamma is feasible.
HinfComparisonResult run_hinf_comparison(const env::TaskSpec& nominal, const std::vector<env::TaskSpec>& in_tests,
                                         const std::vector<env::TaskSpec>& out_tests,
                                         const std::map<std::string, data::NormalizationAnchors>& anchors,
                                         const HinfComparisonConfig& cfg);

nlohmann::json hinf_comparison_to_json(const HinfComparisonResult& r);

}  // namespace dtc::protocols
