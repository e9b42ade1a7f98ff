#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "json.hpp"

#include "dtc/data/trajectory.hpp"
#include "dtc/env/policy.hpp"
#include "dtc/model/optimizer.hpp"
#include "dtc/model/tensors.hpp"
#include "dtc/protocols/train.hpp"

namespace dtc::protocols {

struct BcConfig {
  int hidden = 128;
  int n_hidden = 3;
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  model::AdamWHyper hyper;
};

nlohmann::json bc_config_to_json(const BcConfig& c);
BcConfig bc_config_from_json(const nlohmann::json& j, BcConfig base = {});

/// Feedforward regressor o -> a with GELU hidden layers. Weights are
/// "l<i>.W" (out x in) and "l<i>.b".
struct BcModel {
  int n_o = 0;
  int n_a = 0;
  model::TensorList<double> params;

  Vec predict(const Vec& obs) const;
  /// Rows of `obs` mapped to rows of actions.
  Mat predict_rows(const Mat& obs) const;
};

BcModel init_bc(int n_o, int n_a, const BcConfig& cfg);

struct BcTrainResult {
  BcModel model;
  std::vector<LossRow> log;
};

/// Minibatch AdamW on the per-step action MSE over every (o_t, a_t) pair.
BcTrainResult train_bc(const std::vector<data::Trajectory>& trajs, const BcConfig& cfg);

/// Mean squared action error of `model` over every step of `trajs`.
double bc_mse(const BcModel& model, const std::vector<data::Trajectory>& trajs);

/// Memoryless policy a = model(o). Rewards are ignored.
class BcPolicy final : public env::Policy {
 public:
  explicit BcPolicy(std::shared_ptr<const BcModel> model) : model_(std::move(model)) {}
  void reset(std::uint64_t) override {}
  Vec act(const Vec& obs) override { return model_->predict(obs); }
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<BcPolicy>(*this); }
  std::string name() const override { return "bc"; }

 private:
  std::shared_ptr<const BcModel> model_;
};

/// JSON document holding dimensions and every weight at full precision.
nlohmann::json bc_model_to_json(const BcModel& m);
BcModel bc_model_from_json(const nlohmann::json& j);

}  // namespace dtc::protocols
