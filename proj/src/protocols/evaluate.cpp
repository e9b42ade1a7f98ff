#include "dtc/protocols/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "dtc/env/environment.hpp"
#include "dtc/env/io.hpp"
#include "dtc/parallel.hpp"
#include "dtc/protocols/dt_policy.hpp"

namespace dtc::protocols {

using nlohmann::json;

void EvalConfig::validate() const {
  require(episodes >= 1, "EvalConfig: episodes must be >= 1");
  require(std::isfinite(target_return), "EvalConfig: target_return must be finite");
  if (score_cap) require(score_cap->first < score_cap->second, "EvalConfig: score cap needs low < high");
}

json eval_config_to_json(const EvalConfig& c) {
  json j = {{"episodes", c.episodes}, {"target_return", c.target_return}, {"seed", c.seed}};
  j["score_cap"] = c.score_cap ? json::array({c.score_cap->first, c.score_cap->second}) : json(nullptr);
  return j;
}

EvalConfig eval_config_from_json(const json& j, EvalConfig c) {
  if (!j.is_object()) throw ValidationError("eval config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "episodes") c.episodes = v.get<int>();
      else if (k == "target_return") c.target_return = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "score_cap") {
        if (v.is_null()) c.score_cap.reset();
        else c.score_cap = std::make_pair(v.at(0).get<double>(), v.at(1).get<double>());
      } else {
        throw ValidationError("unknown eval config key '" + k + "'");
      }
    }
    c.validate();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("eval config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ValidationError(e.what());
  }
  return c;
}

std::optional<double> default_target_return(const std::string& task_id) {
  const std::string head = task_id.substr(0, task_id.find('-'));
  if (head == "he1") return -10.0;
  if (head == "ac4") return -0.1;
  if (head == "cm3") return -5.0;
  if (head == "cdr") return -300.0;
  if (head == "burgers") return -110.0;
  return std::nullopt;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

std::vector<double> TaskEval::returns() const {
  std::vector<double> r;
  for (const auto& e : episodes) r.push_back(e.ret);
  return r;
}

std::vector<double> TaskEval::scores() const {
  std::vector<double> s;
  if (!anchors) return s;
  for (const auto& e : episodes) s.push_back(data::normalize_score(e.ret, *anchors));
  return s;
}

double TaskEval::mean_return() const { return mean_std(returns()).first; }
double TaskEval::std_return() const { return mean_std(returns()).second; }
double TaskEval::score_mean() const {
  const double m = mean_std(scores()).first;
  return score_cap && std::isfinite(m) ? data::cap_score(m, score_cap->first, score_cap->second) : m;
}
double TaskEval::score_std() const { return mean_std(scores()).second; }

int TaskEval::n_faulted() const {
  int n = 0;
  for (const auto& e : episodes) n += e.faulted ? 1 : 0;
  return n;
}

namespace {

json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

json task_eval_to_json(const TaskEval& e) {
  json eps = json::array();
  for (const auto& x : e.episodes) {
    json j = {{"return", x.ret}, {"faulted", x.faulted}, {"fault_step", x.fault_step}, {"length", x.length}};
    if (!x.rewards.empty()) j["rewards"] = x.rewards;
    if (!x.prompts.empty()) j["prompts"] = x.prompts;
    eps.push_back(std::move(j));
  }
  json j = {{"task_id", e.task_id},       {"protocol", e.protocol},
            {"method", e.method},         {"dataset", e.dataset},
            {"split", e.split},
            {"provenance", e.provenance}, {"episodes", std::move(eps)}};
  j["anchors"] = e.anchors ? data::anchors_to_json(*e.anchors) : json(nullptr);
  j["score_cap"] = e.score_cap ? json::array({e.score_cap->first, e.score_cap->second}) : json(nullptr);
  j["summary"] = {{"mean_return", num_or_null(e.mean_return())},
                  {"std_return", num_or_null(e.std_return())},
                  {"score_mean", num_or_null(e.score_mean())},
                  {"score_std", num_or_null(e.score_std())},
                  {"n_faulted", e.n_faulted()}};
  return j;
}

TaskEval task_eval_from_json(const json& j) {
  try {
    TaskEval e;
    e.task_id = j.at("task_id").get<std::string>();
    e.protocol = j.at("protocol").get<std::string>();
    e.method = j.at("method").get<std::string>();
    e.dataset = j.at("dataset").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.provenance = j.at("provenance");
    if (!j.at("anchors").is_null()) e.anchors = data::anchors_from_json(j.at("anchors"));
    if (!j.at("score_cap").is_null())
      e.score_cap = std::make_pair(j["score_cap"].at(0).get<double>(), j["score_cap"].at(1).get<double>());
    for (const auto& x : j.at("episodes")) {
      EpisodeResult r;
      r.ret = x.at("return").get<double>();
      r.faulted = x.at("faulted").get<bool>();
      r.fault_step = x.at("fault_step").get<int>();
      r.length = x.at("length").get<int>();
      if (x.contains("rewards")) r.rewards = x["rewards"].get<std::vector<double>>();
      if (x.contains("prompts")) r.prompts = x["prompts"].get<std::vector<double>>();
      e.episodes.push_back(std::move(r));
    }
    return e;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("evaluation record: ") + ex.what());
  }
}

json report_to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& e : r.rows) rows.push_back(task_eval_to_json(e));
  return {{"protocol", r.protocol}, {"rows", std::move(rows)}, {"meta", r.meta}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.protocol = j.at("protocol").get<std::string>();
    for (const auto& x : j.at("rows")) r.rows.push_back(task_eval_from_json(x));
    if (j.contains("meta")) r.meta = j["meta"];
    return r;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("report: ") + ex.what());
  }
}

void write_rows_csv(std::ostream& out, const EvalReport& r) {
  out << "task_id,protocol,method,dataset,split,episodes,faulted,mean_return,std_return,score_mean,score_std\n";
  char buf[256];
  for (const auto& e : r.rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%d,%.10g,%.10g,%.10g,%.10g\n", e.episodes.size(), e.n_faulted(),
                  e.mean_return(), e.std_return(), e.score_mean(), e.score_std());
    out << e.task_id << ',' << e.protocol << ',' << e.method << ',' << e.dataset << ',' << e.split << buf;
  }
}

TaskEval evaluate_policy(const env::TaskSpec& task, const env::Policy& policy, const EvalConfig& cfg,
                         const std::optional<data::NormalizationAnchors>& anchors) {
  cfg.validate();
  TaskEval out;
  out.task_id = task.task_id;
  out.provenance = env::provenance_to_json(task.provenance);
  out.anchors = anchors;
  out.score_cap = cfg.score_cap;
  out.episodes.resize(static_cast<std::size_t>(cfg.episodes));
  parallel_for(out.episodes.size(), cfg.jobs, [&](std::size_t i) {
    env::Environment env(task);
    auto p = policy.clone();
    const auto traj = env::run_episode(env, *p, derive_seed(cfg.seed, 2 * i), derive_seed(cfg.seed, 2 * i + 1));
    EpisodeResult& r = out.episodes[i];
    r.ret = traj.total_return();
    r.faulted = traj.faulted;
    r.fault_step = traj.fault_step;
    r.length = traj.length();
    if (cfg.record_steps) {
      r.rewards.assign(traj.rew.data(), traj.rew.data() + traj.rew.size());
      if (const auto* dt = dynamic_cast<const DtPolicy*>(p.get())) r.prompts = dt->prompts();
    }
  });
  return out;
}

TaskEval rollout_dt(std::shared_ptr<const model::Checkpoint> checkpoint, const env::TaskSpec& task,
                    const EvalConfig& cfg, const std::optional<data::NormalizationAnchors>& anchors) {
  require(checkpoint != nullptr, "rollout_dt: null checkpoint");
  check_dims(checkpoint->config, task);
  DtPolicy policy(std::move(checkpoint), cfg.target_return);
  TaskEval e = evaluate_policy(task, policy, cfg, anchors);
  e.method = "dt";
  return e;
}

}  // namespace dtc::protocols
