#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtc/data/trajectory.hpp"
#include "dtc/model/checkpoint.hpp"
#include "dtc/model/transformer.hpp"

namespace dtc::protocols {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  model::Trainable trainable = model::Trainable::kAll;
  model::AdamWHyper hyper;
  int jobs = 1;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Unknown keys raise ValidationError. Missing keys keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct LossRow {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since the start of training
};

/// CSV with header step,loss,lr,wall_time.
void write_loss_csv(std::ostream& out, const std::vector<LossRow>& log);

struct TrainResult {
  /// Final parameters, or the last finite ones when training aborted.
  model::Checkpoint checkpoint;
  std::vector<LossRow> log;
  bool aborted = false;
  std::string abort_reason;
};

/// Every window of every trajectory (one per end index).
std::vector<data::ContextWindow> collect_windows(const std::vector<data::Trajectory>& trajs, int K);

/// Mean absolute total return; a scale that keeps returns-to-go near unit size.
double suggest_rtg_scale(const std::vector<data::Trajectory>& trajs);

/// Trains a fresh model initialized from cfg.seed.
TrainResult train_offline(const std::vector<data::Trajectory>& trajs, const model::ModelConfig& cfg,
                          const TrainConfig& tc);

/// Continues from `start`. With Trainable::kAdaptersOnly the checkpoint must
/// carry adapters and its base parameters are never written.
///
/// Each epoch visits the windows in a permutation seeded by (tc.seed, epoch)
/// and takes one optimizer step per batch. Dropout masks derive from
/// (tc.seed, step). A non-finite loss, gradient or update stops training and
/// returns the parameters from before the failing step with `aborted` set.
TrainResult train_from(model::Checkpoint start, const std::vector<data::Trajectory>& trajs, const TrainConfig& tc);

struct AdaptConfig {
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 0;
  model::AdamWHyper hyper{1e-3, 1e-5, 0.9, 0.999, 1e-8};
  /// Update every base parameter instead of attaching adapters.
  bool adapt_all = false;
  int jobs = 1;
};

nlohmann::json adapt_config_to_json(const AdaptConfig& c);
AdaptConfig adapt_config_from_json(const nlohmann::json& j, AdaptConfig base = {});

/// Attaches fresh adapters (seeded by cfg.seed, B = 0) to `base` and trains
/// only them on the windows of `demos`; the base parameters are left bit for
/// bit as they were. With adapt_all the base is trained instead and no
/// adapters are attached.
TrainResult adapt_k_shot(const model::Checkpoint& base, const std::vector<data::Trajectory>& demos,
                         const AdaptConfig& cfg);

/// FNV-1a over names, shapes and raw bytes; equal digests mean equal tensors
/// for all practical purposes.
std::uint64_t params_digest(const model::TensorList<float>& params);

}  // namespace dtc::protocols
