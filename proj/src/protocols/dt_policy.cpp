#include "dtc/protocols/dt_policy.hpp"

#include <cmath>

#include "dtc/model/transformer.hpp"

namespace dtc::protocols {

void check_dims(const model::ModelConfig& cfg, const env::TaskSpec& task) {
  if (cfg.n_o != task.n_o() || cfg.n_a != task.n_a())
    throw ValidationError("dimension mismatch: checkpoint has n_o=" + std::to_string(cfg.n_o) +
                          ", n_a=" + std::to_string(cfg.n_a) + " but task '" + task.task_id +
                          "' has n_o=" + std::to_string(task.n_o()) + ", n_a=" + std::to_string(task.n_a()));
}

DtPolicy::DtPolicy(std::shared_ptr<const model::Checkpoint> checkpoint, double target_return)
    : ckpt_(std::move(checkpoint)), target_(target_return) {
  require(ckpt_ != nullptr, "DtPolicy: null checkpoint");
  require(std::isfinite(target_return), "DtPolicy: target return must be finite");
  ckpt_->config.validate();
}

void DtPolicy::reset(std::uint64_t) {
  prompt_ = target_;
  prompts_.clear();
  obs_.clear();
  act_.clear();
}

Vec DtPolicy::act(const Vec& obs) {
  const model::ModelConfig& cfg = ckpt_->config;
  require(obs.size() == cfg.n_o, "DtPolicy: observation has length " + std::to_string(obs.size()));
  prompts_.push_back(prompt_);
  obs_.push_back(obs);
  act_.push_back(Vec::Zero(cfg.n_a));

  const int K = cfg.K;
  const int n = static_cast<int>(obs_.size());
  const int real = std::min(n, K);
  model::Batch b;
  b.B = 1;
  b.K = K;
  b.rtg = Mat::Zero(1, K);
  b.obs = Mat::Zero(K, cfg.n_o);
  b.act = Mat::Zero(K, cfg.n_a);
  b.timesteps.resize(static_cast<std::size_t>(K));
  b.mask.assign(static_cast<std::size_t>(K), 0);
  for (int k = 0; k < K; ++k) b.timesteps[static_cast<std::size_t>(k)] = k;
  for (int j = 0; j < real; ++j) {
    const int slot = K - real + j;
    const int src = n - real + j;
    b.rtg(0, slot) = prompts_[static_cast<std::size_t>(src)];
    b.obs.row(slot) = obs_[static_cast<std::size_t>(src)].transpose();
    b.act.row(slot) = act_[static_cast<std::size_t>(src)].transpose();
    b.mask[static_cast<std::size_t>(slot)] = 1;
  }
  const auto* adapters = ckpt_->adapters ? &*ckpt_->adapters : nullptr;
  const model::MatR<float> pred = model::forward(cfg, ckpt_->params, adapters, b);
  Vec a = pred.row(K - 1).cast<double>().transpose();
  act_.back() = a;
  return a;
}

void DtPolicy::feedback(double reward) { prompt_ -= reward; }

}  // namespace dtc::protocols
