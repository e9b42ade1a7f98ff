#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "dtc/model/config.hpp"
#include "dtc/model/optimizer.hpp"

namespace dtc::model {

constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig config;
  TensorList<float> params;
  std::optional<TensorList<float>> adapters;
  std::optional<AdamWState<float>> opt_state;
  /// Free-form provenance (training run settings, dataset path, ...).
  nlohmann::json meta = nlohmann::json::object();
};

/// Writes <dir>/manifest.json and <dir>/payload.bin (little-endian float32).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Throws ValidationError on manifest/shape mismatches and on a truncated payload.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace dtc::model
