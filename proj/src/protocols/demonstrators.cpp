#include "dtc/protocols/demonstrators.hpp"

#include <cmath>

#include "dtc/data/dataset.hpp"

namespace dtc::protocols {

using nlohmann::json;

json demonstrator_config_to_json(const DemonstratorConfig& c) {
  return {{"population", c.search.population},
          {"iterations", c.search.iterations},
          {"episodes_per_eval", c.search.episodes_per_eval},
          {"init_std", c.search.init_std},
          {"smoothing", c.search.smoothing},
          {"patience", c.search.patience},
          {"expert_noise", c.expert_noise},
          {"medium_noise", c.medium_noise},
          {"anchor_episodes", c.anchor_episodes},
          {"seed", c.seed}};
}

DemonstratorConfig demonstrator_config_from_json(const json& j, DemonstratorConfig c) {
  if (!j.is_object()) throw ValidationError("demonstrator config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "population") c.search.population = v.get<int>();
      else if (k == "iterations") c.search.iterations = v.get<int>();
      else if (k == "episodes_per_eval") c.search.episodes_per_eval = v.get<int>();
      else if (k == "init_std") c.search.init_std = v.get<double>();
      else if (k == "smoothing") c.search.smoothing = v.get<double>();
      else if (k == "patience") c.search.patience = v.get<int>();
      else if (k == "expert_noise") c.expert_noise = v.get<double>();
      else if (k == "medium_noise") c.medium_noise = v.get<double>();
      else if (k == "anchor_episodes") c.anchor_episodes = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ValidationError("unknown demonstrator config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("demonstrator config: ") + e.what());
  }
  if (c.expert_noise < 0.0 || c.medium_noise < 0.0 || c.anchor_episodes < 1)
    throw ValidationError("demonstrator config: noise >= 0 and anchor_episodes >= 1 required");
  return c;
}

std::unique_ptr<env::Policy> Demonstrators::policy(const std::string& role) const {
  if (role == "expert") return std::make_unique<control::StaticGainPolicy>(expert, expert_noise_std);
  if (role == "medium") return std::make_unique<control::StaticGainPolicy>(medium, medium_noise_std);
  throw ContractViolation("demonstrator role must be 'expert' or 'medium', got '" + role + "'");
}

Demonstrators fit_demonstrators(const env::TaskSpec& task, const DemonstratorConfig& cfg) {
  control::SearchConfig sc = cfg.search;
  sc.seed = derive_seed(cfg.seed, 0);
  const auto fit = control::fit_static_gain(task, sc);

  Demonstrators d;
  d.task_id = task.task_id;
  d.expert = fit.expert;
  d.medium = fit.medium;
  d.medium_iteration = fit.medium_iteration;
  d.trace = fit.trace;
  d.expert_noise_std = cfg.expert_noise;
  d.medium_noise_std = cfg.medium_noise;
  const double je = data::mean_return(task, *d.policy("expert"), cfg.anchor_episodes, derive_seed(cfg.seed, 2));
  const double jm = data::mean_return(task, *d.policy("medium"), cfg.anchor_episodes, derive_seed(cfg.seed, 3));
  if (!(std::isfinite(je) && std::isfinite(jm) && je > jm))
    throw ValidationError("task '" + task.task_id + "': expert demonstrator return " + std::to_string(je) +
                          " does not exceed the medium return " + std::to_string(jm));
  d.anchors = data::NormalizationAnchors(je, jm);
  return d;
}

json demonstrators_to_json(const Demonstrators& d) {
  json trace = json::array();
  for (const auto& p : d.trace) trace.push_back({p.iteration, p.mean_return, p.best_return});
  return {{"task_id", d.task_id},
          {"expert", control::static_gain_to_json(d.expert)},
          {"medium", control::static_gain_to_json(d.medium)},
          {"expert_noise_std", d.expert_noise_std},
          {"medium_noise_std", d.medium_noise_std},
          {"medium_iteration", d.medium_iteration},
          {"anchors", data::anchors_to_json(d.anchors)},
          {"trace", std::move(trace)}};
}

Demonstrators demonstrators_from_json(const json& j) {
  try {
    Demonstrators d;
    d.task_id = j.at("task_id").get<std::string>();
    d.expert = control::static_gain_from_json(j.at("expert"));
    d.medium = control::static_gain_from_json(j.at("medium"));
    d.expert_noise_std = j.at("expert_noise_std").get<double>();
    d.medium_noise_std = j.at("medium_noise_std").get<double>();
    d.medium_iteration = j.at("medium_iteration").get<int>();
    d.anchors = data::anchors_from_json(j.at("anchors"));
    if (j.contains("trace"))
      for (const auto& p : j["trace"])
        d.trace.push_back({p.at(0).get<int>(), p.at(1).get<double>(), p.at(2).get<double>()});
    if (d.expert_noise_std < 0.0 || d.medium_noise_std < 0.0) throw ValidationError("negative demonstrator noise");
    if (d.expert.F.rows() != d.medium.F.rows() || d.expert.F.cols() != d.medium.F.cols())
      throw ValidationError("expert and medium gains differ in shape");
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("demonstrators: ") + e.what());
  }
}

}  // namespace dtc::protocols
