#include "dtc/model/config.hpp"

#include <cmath>
#include <set>

#include "dtc/common.hpp"

namespace dtc::model {

void ModelConfig::validate() const {
  require(n_layers >= 1, "ModelConfig: n_layers must be >= 1");
  require(n_heads >= 1 && d_model >= 1 && d_model % n_heads == 0, "ModelConfig: d_model must be divisible by n_heads");
  require(d_ff >= 1, "ModelConfig: d_ff must be >= 1");
  require(K >= 1, "ModelConfig: K must be >= 1");
  require(n_o >= 1 && n_a >= 1, "ModelConfig: n_o and n_a must be >= 1");
  require(n_embed_layers >= 1, "ModelConfig: n_embed_layers must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "ModelConfig: dropout_rate must lie in [0, 1)");
  require(lora_rank >= 0, "ModelConfig: lora_rank must be >= 0");
  require(std::isfinite(lora_alpha), "ModelConfig: lora_alpha must be finite");
  require(std::isfinite(rtg_scale) && rtg_scale > 0.0, "ModelConfig: rtg_scale must be positive");
}

ModelConfig tiny_config(int n_o, int n_a) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 32;
  c.K = 3;
  c.n_o = n_o;
  c.n_a = n_a;
  c.n_embed_layers = 2;
  c.dropout_rate = 0.0;
  c.lora_rank = 2;
  c.lora_alpha = 4.0;
  return c;
}

ModelConfig desk_config(int n_o, int n_a) {
  ModelConfig c;
  c.n_o = n_o;
  c.n_a = n_a;
  return c;
}

ModelConfig paper_config(int n_o, int n_a) {
  ModelConfig c;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_model = 768;
  c.d_ff = 4 * 768;
  c.n_o = n_o;
  c.n_a = n_a;
  return c;
}

ModelConfig preset_config(const std::string& name, int n_o, int n_a) {
  if (name == "tiny") return tiny_config(n_o, n_a);
  if (name == "desk") return desk_config(n_o, n_a);
  if (name == "paper") return paper_config(n_o, n_a);
  throw ValidationError("unknown model preset '" + name + "' (expected tiny, desk or paper)");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"K", c.K},
          {"n_o", c.n_o},
          {"n_a", c.n_a},
          {"n_embed_layers", c.n_embed_layers},
          {"dropout_rate", c.dropout_rate},
          {"lora_rank", c.lora_rank},
          {"lora_alpha", c.lora_alpha},
          {"rtg_scale", c.rtg_scale},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  static const std::set<std::string> known{"n_layers", "n_heads", "d_model", "d_ff", "K", "n_o", "n_a",
                                           "n_embed_layers", "dropout_rate", "lora_rank", "lora_alpha",
                                           "rtg_scale", "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("unknown model config key '" + k + "'");
  try {
    auto get_int = [&](const char* k, int& dst) {
      if (j.contains(k)) dst = j[k].get<int>();
    };
    auto get_dbl = [&](const char* k, double& dst) {
      if (j.contains(k)) dst = j[k].get<double>();
    };
    get_int("n_layers", c.n_layers);
    get_int("n_heads", c.n_heads);
    get_int("d_model", c.d_model);
    get_int("d_ff", c.d_ff);
    get_int("K", c.K);
    get_int("n_o", c.n_o);
    get_int("n_a", c.n_a);
    get_int("n_embed_layers", c.n_embed_layers);
    get_dbl("dropout_rate", c.dropout_rate);
    get_int("lora_rank", c.lora_rank);
    get_dbl("lora_alpha", c.lora_alpha);
    get_dbl("rtg_scale", c.rtg_scale);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError(e.what());
  }
  return c;
}

}  // namespace dtc::model
