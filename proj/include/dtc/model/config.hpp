#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace dtc::model {

/// Architecture of the return-conditioned transformer.
struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int K = 20;  // context length in (return, observation, action) positions
  int n_o = 1;
  int n_a = 1;
  int n_embed_layers = 3;
  double dropout_rate = 0.1;
  int lora_rank = 32;
  double lora_alpha = 64.0;
  /// Returns-to-go are divided by this before embedding.
  double rtg_scale = 1.0;
  std::uint64_t seed = 0;

  int d_head() const { return d_model / n_heads; }
  double lora_scale() const { return lora_rank > 0 ? lora_alpha / lora_rank : 0.0; }
  /// Throws ContractViolation on inconsistent sizes.
  void validate() const;
};

/// 1 layer, 2 heads, d_model 8, K 3, two-layer embeddings, no dropout, rank 2.
ModelConfig tiny_config(int n_o, int n_a);
/// 4 layers, 4 heads, d_model 128, K 20.
ModelConfig desk_config(int n_o, int n_a);
/// 12 layers, 12 heads, d_model 768, K 20.
ModelConfig paper_config(int n_o, int n_a);
/// "tiny", "desk" or "paper".
ModelConfig preset_config(const std::string& name, int n_o, int n_a);

nlohmann::json config_to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace dtc::model
