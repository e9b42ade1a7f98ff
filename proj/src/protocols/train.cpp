#include "dtc/protocols/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dtc/data/windows.hpp"

namespace dtc::protocols {

using nlohmann::json;

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"trainable", c.trainable == model::Trainable::kAll ? "all" : "adapters"},
          {"lr", c.hyper.lr},
          {"weight_decay", c.hyper.weight_decay},
          {"beta1", c.hyper.beta1},
          {"beta2", c.hyper.beta2},
          {"eps", c.hyper.eps}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "lr") c.hyper.lr = v.get<double>();
      else if (k == "weight_decay") c.hyper.weight_decay = v.get<double>();
      else if (k == "beta1") c.hyper.beta1 = v.get<double>();
      else if (k == "beta2") c.hyper.beta2 = v.get<double>();
      else if (k == "eps") c.hyper.eps = v.get<double>();
      else if (k == "trainable") {
        const auto s = v.get<std::string>();
        if (s == "all") c.trainable = model::Trainable::kAll;
        else if (s == "adapters") c.trainable = model::Trainable::kAdaptersOnly;
        else throw ValidationError("train config: trainable must be 'all' or 'adapters'");
      } else {
        throw ValidationError("unknown train config key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  if (c.epochs < 0 || c.batch_size < 1) throw ValidationError("train config: epochs >= 0 and batch_size >= 1 required");
  if (!(c.hyper.lr > 0.0) || c.hyper.weight_decay < 0.0) throw ValidationError("train config: bad optimizer settings");
  return c;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRow>& log) {
  out << "step,loss,lr,wall_time\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.6f\n", r.step, r.loss, r.lr, r.wall_time);
    out << buf;
  }
}

std::vector<data::ContextWindow> collect_windows(const std::vector<data::Trajectory>& trajs, int K) {
  std::vector<data::ContextWindow> out;
  for (const auto& t : trajs) {
    auto w = data::make_windows(t, K);
    for (auto& x : w) out.push_back(std::move(x));
  }
  return out;
}

double suggest_rtg_scale(const std::vector<data::Trajectory>& trajs) {
  require(!trajs.empty(), "suggest_rtg_scale: no trajectories");
  double s = 0.0;
  for (const auto& t : trajs) s += std::abs(t.total_return());
  s /= static_cast<double>(trajs.size());
  return s > 0.0 ? s : 1.0;
}

namespace {

template <typename T>
bool all_finite(const model::TensorList<T>& l) {
  for (const auto& t : l)
    if (!t.value.allFinite()) return false;
  return true;
}

// Fisher-Yates on our own RNG so the order does not depend on the standard library.
void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

TrainResult train_offline(const std::vector<data::Trajectory>& trajs, const model::ModelConfig& cfg,
                          const TrainConfig& tc) {
  cfg.validate();
  model::Checkpoint start{cfg, model::init_params<float>(cfg, cfg.seed), std::nullopt, std::nullopt, json::object()};
  return train_from(std::move(start), trajs, tc);
}

TrainResult train_from(model::Checkpoint start, const std::vector<data::Trajectory>& trajs, const TrainConfig& tc) {
  const model::ModelConfig& cfg = start.config;
  cfg.validate();
  require(tc.epochs >= 0 && tc.batch_size >= 1, "train_from: epochs >= 0 and batch_size >= 1 required");
  const bool adapters_only = tc.trainable == model::Trainable::kAdaptersOnly;
  require(!adapters_only || start.adapters.has_value(), "train_from: adapters-only training needs adapters");
  require(adapters_only || !start.adapters.has_value(),
          "train_from: full training of a checkpoint with adapters is not supported");
  for (const auto& t : trajs)
    if (t.obs.cols() != cfg.n_o || t.act.cols() != cfg.n_a)
      throw ValidationError("trajectory of task '" + t.task_id + "' has n_o=" + std::to_string(t.obs.cols()) +
                            ", n_a=" + std::to_string(t.act.cols()) + " but the model expects n_o=" +
                            std::to_string(cfg.n_o) + ", n_a=" + std::to_string(cfg.n_a));

  TrainResult res;
  res.checkpoint = std::move(start);
  res.checkpoint.opt_state.reset();
  res.checkpoint.meta["train"] = train_config_to_json(tc);
  if (tc.epochs == 0) return res;

  const auto windows = collect_windows(trajs, cfg.K);
  require(!windows.empty(), "train_from: no training windows");

  model::TensorList<float>& params = res.checkpoint.params;
  model::TensorList<float>* adapters = res.checkpoint.adapters ? &*res.checkpoint.adapters : nullptr;
  model::TensorList<float>& trained = adapters_only ? *adapters : params;
  model::AdamWState<float> state;

  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t order_seed = derive_seed(tc.seed, 0);
  const std::uint64_t dropout_seed = derive_seed(tc.seed, 1);
  std::vector<std::size_t> idx(windows.size());
  std::vector<const data::ContextWindow*> members;
  long step = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
    shuffle(idx, rng);
    for (std::size_t b0 = 0; b0 < idx.size(); b0 += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t b1 = std::min(idx.size(), b0 + static_cast<std::size_t>(tc.batch_size));
      members.clear();
      for (std::size_t i = b0; i < b1; ++i) members.push_back(&windows[idx[i]]);
      const model::Batch batch = model::make_batch(members);

      model::TensorList<float> backup = trained;
      const model::AdamWState<float> state_backup = state;
      std::string failure;
      double loss = 0.0;
      try {
        auto lg = model::loss_and_grad(cfg, params, adapters, batch, tc.trainable, cfg.dropout_rate > 0.0,
                                       derive_seed(dropout_seed, static_cast<std::uint64_t>(step)), tc.jobs);
        loss = lg.loss;
        if (!std::isfinite(loss)) {
          failure = "non-finite loss";
        } else {
          model::adamw_step(trained, lg.grads, state, tc.hyper);
          if (!all_finite(trained)) failure = "non-finite parameters after the update";
        }
      } catch (const model::NumericalFault& e) {
        failure = e.what();
      }
      if (!failure.empty()) {
        trained = std::move(backup);
        state = state_backup;
        res.aborted = true;
        res.abort_reason = "step " + std::to_string(step) + ": " + failure;
        res.checkpoint.opt_state = std::move(state);
        return res;
      }
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.log.push_back({step, loss, tc.hyper.lr, wall});
      ++step;
    }
  }
  res.checkpoint.opt_state = std::move(state);
  return res;
}

json adapt_config_to_json(const AdaptConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"seed", c.seed},
          {"lr", c.hyper.lr},   {"weight_decay", c.hyper.weight_decay}, {"adapt_all", c.adapt_all}};
}

AdaptConfig adapt_config_from_json(const json& j, AdaptConfig c) {
  if (!j.is_object()) throw ValidationError("adapt config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "lr") c.hyper.lr = v.get<double>();
      else if (k == "weight_decay") c.hyper.weight_decay = v.get<double>();
      else if (k == "adapt_all") c.adapt_all = v.get<bool>();
      else throw ValidationError("unknown adapt config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("adapt config: ") + e.what());
  }
  if (c.epochs < 0 || c.batch_size < 1 || !(c.hyper.lr > 0.0)) throw ValidationError("adapt config: bad settings");
  return c;
}

TrainResult adapt_k_shot(const model::Checkpoint& base, const std::vector<data::Trajectory>& demos,
                         const AdaptConfig& cfg) {
  require(!demos.empty(), "adapt_k_shot: at least one demonstration is required");
  if (base.adapters) throw ValidationError("adapt_k_shot: checkpoint already carries adapters");
  model::Checkpoint start{base.config, base.params, std::nullopt, std::nullopt, base.meta};
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.hyper = cfg.hyper;
  tc.jobs = cfg.jobs;
  if (cfg.adapt_all) {
    tc.trainable = model::Trainable::kAll;
  } else {
    require(base.config.lora_rank >= 1, "adapt_k_shot: lora_rank must be >= 1 for adapter training");
    start.adapters = model::init_adapters<float>(base.config, derive_seed(cfg.seed, 7));
    tc.trainable = model::Trainable::kAdaptersOnly;
  }
  TrainResult r = train_from(std::move(start), demos, tc);
  r.checkpoint.meta["adapt"] = adapt_config_to_json(cfg);
  r.checkpoint.meta["adapt"]["k"] = demos.size();
  return r;
}

std::uint64_t params_digest(const model::TensorList<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& t : params) {
    eat(t.name.data(), t.name.size());
    const std::int64_t shape[2] = {t.value.rows(), t.value.cols()};
    eat(shape, sizeof shape);
    eat(t.value.data(), sizeof(float) * static_cast<std::size_t>(t.value.size()));
  }
  return h;
}

}  // namespace dtc::protocols
