#include "cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dtc/control/hinf.hpp"
#include "dtc/control/lqg.hpp"
#include "dtc/control/static_gain.hpp"
#include "dtc/data/dataset.hpp"
#include "dtc/env/io.hpp"
#include "dtc/model/checkpoint.hpp"
#include "dtc/protocols/bc.hpp"
#include "dtc/protocols/demonstrators.hpp"
#include "dtc/protocols/dt_policy.hpp"
#include "dtc/protocols/evaluate.hpp"
#include "dtc/protocols/experiments.hpp"
#include "dtc/protocols/train.hpp"

namespace dtc::cli {

namespace fs = std::filesystem;
using namespace dtc::protocols;

namespace {

// ---- config access ----------------------------------------------------------

std::uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

json& need(json& cfg, const std::string& key) {
  json& v = cfg.at(key);
  if (v.is_null()) throw ValidationError("'" + key + "' is required");
  return v;
}

// Builtin task names stay as they are; file paths become absolute so the
// resolved snapshot does not depend on the working directory.
env::TaskSpec task_of(json& slot, const RunContext& ctx) {
  if (slot.is_null()) throw ValidationError("a task is required");
  const std::string s = slot.get<std::string>();
  if (s.find('/') != std::string::npos || s.find('.') != std::string::npos) {
    const fs::path p = fs::absolute(ctx.input(slot));
    slot = p.string();
    return env::load_task_file(p);
  }
  return env::builtin_task(s);
}

fs::path path_of(json& slot, const RunContext& ctx) {
  if (slot.is_null()) throw ValidationError("a required path is missing");
  const fs::path p = fs::absolute(ctx.input(slot));
  slot = p.string();
  return p;
}

model::ModelConfig model_of(const json& v, int n_o, int n_a) {
  model::ModelConfig mc;
  if (v.is_string()) mc = model::preset_config(v.get<std::string>(), n_o, n_a);
  else if (v.is_object()) mc = model::config_from_json(v);
  else throw ValidationError("'model' must be a preset name or a config object");
  mc.n_o = n_o;
  mc.n_a = n_a;
  return mc;
}

// Canonical form of a nested section for the resolved snapshot. Seeds are
// derived from the command seed, so the section's own seed key is dropped.
json canonical(json j) {
  j.erase("seed");
  return j;
}

double target_of(const json& v, const env::TaskSpec& task) {
  if (!v.is_null()) return v.get<double>();
  const auto t = default_target_return(task.task_id);
  if (!t) throw ValidationError("no default target return for task '" + task.task_id + "'; set target_return");
  return *t;
}

// ---- artifact writers -------------------------------------------------------

void write_loss(const fs::path& p, const std::vector<LossRow>& log) {
  std::ofstream out(p, std::ios::binary);
  write_loss_csv(out, log);
}

void write_report(const fs::path& dir, const EvalReport& r) {
  write_json_file(dir / "report.json", report_to_json(r));
  std::ofstream rows(dir / "rows.csv", std::ios::binary);
  write_rows_csv(rows, r);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory_csv(const fs::path& p, const data::Trajectory& t) {
  std::ostringstream s;
  s << "t";
  for (int j = 0; j < t.obs.cols(); ++j) s << ",o" << j;
  for (int j = 0; j < t.act.cols(); ++j) s << ",a" << j;
  s << ",r\n";
  for (int i = 0; i < t.length(); ++i) {
    s << i;
    for (int j = 0; j < t.obs.cols(); ++j) s << ',' << num(t.obs(i, j));
    for (int j = 0; j < t.act.cols(); ++j) s << ',' << num(t.act(i, j));
    s << ',' << num(t.rew(i)) << '\n';
  }
  write_text_file(p, s.str());
}

// Rows are time, columns the state entries (grid points for PDE tasks).
void write_field_csv(const fs::path& p, const std::vector<Vec>& states) {
  std::ostringstream s;
  s << "t";
  const auto n = states.empty() ? 0 : states[0].size();
  for (Eigen::Index j = 0; j < n; ++j) s << ",s" << j;
  s << '\n';
  for (std::size_t i = 0; i < states.size(); ++i) {
    s << i;
    for (Eigen::Index j = 0; j < n; ++j) s << ',' << num(states[i](j));
    s << '\n';
  }
  write_text_file(p, s.str());
}

void save_checkpoint_dir(const fs::path& dir, const model::Checkpoint& ck) {
  fs::create_directories(dir);
  model::save_checkpoint(dir, ck);
}

// ---- policies ---------------------------------------------------------------

Demonstrators load_demonstrators(json& slot, const RunContext& ctx) {
  return demonstrators_from_json(read_json_file(path_of(slot, ctx)));
}

struct LoadedPolicy {
  std::unique_ptr<env::Policy> policy;
  json meta = json::object();  // training provenance of learned policies
};

LoadedPolicy make_policy(json& cfg, const env::TaskSpec& task, const RunContext& ctx) {
  const std::string kind = cfg.at("policy").get<std::string>();
  if (kind == "zero") return {std::make_unique<env::ZeroPolicy>(task.n_a())};
  if (kind == "lqg" || kind == "hinf") {
    if (!task.is_linear()) throw ValidationError("policy '" + kind + "' needs a linear task");
    if (kind == "lqg") return {std::make_unique<control::LqgPolicy>(task.linear(), task.reward)};
    const double g = need(cfg, "gamma").get<double>();
    auto sol = control::solve_hinf_central(task.linear(), task.reward, g);
    if (const auto* bad = std::get_if<control::HinfInfeasible>(&sol))
      throw ValidationError("gamma " + num(g) + " is infeasible: " + bad->reason);
    return {std::make_unique<control::HinfPolicy>(std::get<control::HinfController>(sol))};
  }
  if (kind == "expert" || kind == "medium") {
    auto d = load_demonstrators(need(cfg, "demonstrators"), ctx);
    if (d.expert.F.rows() != task.n_a() || d.expert.F.cols() != task.n_o())
      throw ValidationError("demonstrator gain shape does not fit task '" + task.task_id + "'");
    return {d.policy(kind)};
  }
  if (kind == "dt") {
    auto ck = std::make_shared<const model::Checkpoint>(model::load_checkpoint(path_of(need(cfg, "checkpoint"), ctx)));
    check_dims(ck->config, task);
    return {std::make_unique<DtPolicy>(ck, target_of(cfg.at("target_return"), task)), ck->meta};
  }
  if (kind == "bc") {
    const json doc = read_json_file(path_of(need(cfg, "bc_model"), ctx));
    auto m = std::make_shared<const BcModel>(bc_model_from_json(doc));
    if (m->n_o != task.n_o() || m->n_a != task.n_a())
      throw ValidationError("dimension mismatch: BC model has n_o=" + std::to_string(m->n_o) +
                            ", n_a=" + std::to_string(m->n_a) + " but task '" + task.task_id + "' has n_o=" +
                            std::to_string(task.n_o()) + ", n_a=" + std::to_string(task.n_a()));
    return {std::make_unique<BcPolicy>(m), doc.value("meta", json::object())};
  }
  throw ValidationError("unknown policy '" + kind + "' (zero, lqg, hinf, expert, medium, dt, bc)");
}

// ---- commands ---------------------------------------------------------------

void run_env_sim(json& cfg, const RunContext& ctx) {
  const auto task = task_of(cfg["task"], ctx);
  auto policy = make_policy(cfg, task, ctx).policy;
  const int episodes = cfg.at("episodes").get<int>();
  if (episodes < 1) throw ValidationError("episodes must be >= 1");
  const bool fields = cfg.at("dump_fields").get<bool>();
  ctx.write_resolved(cfg);
  const std::uint64_t seed = seed_of(cfg);
  env::Environment environment(task);
  json summary = {{"task_id", task.task_id}, {"policy", cfg["policy"]}, {"episodes", json::array()}};
  for (int i = 0; i < episodes; ++i) {
    const auto e = static_cast<std::uint64_t>(i);
    std::vector<Vec> states;
    const auto traj = env::run_episode(environment, *policy, derive_seed(seed, 2 * e), derive_seed(seed, 2 * e + 1),
                                       fields ? &states : nullptr);
    write_trajectory_csv(ctx.dir / ("trajectory_" + std::to_string(i) + ".csv"), traj);
    if (fields) write_field_csv(ctx.dir / ("fields_" + std::to_string(i) + ".csv"), states);
    summary["episodes"].push_back({{"return", traj.total_return()},
                                   {"faulted", traj.faulted},
                                   {"fault_step", traj.fault_step},
                                   {"length", traj.length()}});
    *ctx.out << "episode " << i << ": return " << num(traj.total_return()) << (traj.faulted ? " (faulted)" : "") << "\n";
  }
  write_json_file(ctx.dir / "summary.json", summary);
}

void run_fit_demonstrator(json& cfg, const RunContext& ctx) {
  const auto task = task_of(cfg["task"], ctx);
  DemonstratorConfig dc = demonstrator_config_from_json(cfg.at("demo"));
  dc.seed = seed_of(cfg);
  dc.search.jobs = ctx.jobs;
  cfg["demo"] = canonical(demonstrator_config_to_json(dc));
  ctx.write_resolved(cfg);
  const auto d = fit_demonstrators(task, dc);
  write_json_file(ctx.dir / "demonstrators.json", demonstrators_to_json(d));
  env::save_task_file(ctx.dir / "task.json", task);
  std::ofstream trace(ctx.dir / "trace.csv", std::ios::binary);
  control::write_trace_csv(trace, d.trace);
  *ctx.out << "anchors: expert " << num(d.anchors.j_expert()) << ", medium " << num(d.anchors.j_medium()) << "\n";
}

void run_gen_data(json& cfg, const RunContext& ctx) {
  const auto task = task_of(cfg["task"], ctx);
  const auto d = load_demonstrators(need(cfg, "demonstrators"), ctx);
  if (d.task_id != task.task_id)
    throw ValidationError("demonstrators were fitted on '" + d.task_id + "', not '" + task.task_id + "'");
  const std::string role = cfg.at("role").get<std::string>();
  if (role != "expert" && role != "medium") throw ValidationError("role must be 'expert' or 'medium'");
  const int n = cfg.at("n_traj").get<int>();
  if (n < 0) throw ValidationError("n_traj must be >= 0");
  ctx.write_resolved(cfg);
  data::Dataset ds;
  ds.header.tasks = {task};
  ds.header.anchors.emplace(task.task_id, d.anchors);
  ds.header.behavior_policy = role;
  ds.header.seed = seed_of(cfg);
  data::CollectStats stats;
  ds.trajectories = data::rollout_collect(task, *d.policy(role), n, seed_of(cfg), &stats);
  data::write_dataset(ctx.dir / "dataset.jsonl", ds);
  write_json_file(ctx.dir / "stats.json", {{"collected", stats.collected}, {"discarded", stats.discarded}});
}

std::vector<data::Dataset> load_datasets(json& slot, const RunContext& ctx) {
  if (!slot.is_array() || slot.empty()) throw ValidationError("at least one dataset is required");
  std::vector<data::Dataset> out;
  for (auto& p : slot) out.push_back(data::read_dataset(path_of(p, ctx)));
  return out;
}

// Behavior policies of the datasets, e.g. "expert" or "expert+medium".
std::string label_of(const std::vector<data::Dataset>& sets) {
  std::vector<std::string> seen;
  for (const auto& ds : sets)
    if (std::find(seen.begin(), seen.end(), ds.header.behavior_policy) == seen.end())
      seen.push_back(ds.header.behavior_policy);
  std::string out;
  for (const auto& s : seen) out += (out.empty() ? "" : "+") + s;
  return out;
}

json anchors_of(const std::vector<data::Dataset>& sets) {
  json a = json::object();
  for (const auto& ds : sets)
    for (const auto& [id, an] : ds.header.anchors) a[id] = data::anchors_to_json(an);
  return a;
}

void run_train(json& cfg, const RunContext& ctx) {
  const auto sets = load_datasets(cfg["datasets"], ctx);
  std::vector<data::Trajectory> trajs;
  for (const auto& ds : sets) trajs.insert(trajs.end(), ds.trajectories.begin(), ds.trajectories.end());
  if (trajs.empty()) throw ValidationError("the datasets hold no trajectories");
  const int n_o = static_cast<int>(trajs[0].obs.cols());
  const int n_a = static_cast<int>(trajs[0].act.cols());
  const std::uint64_t seed = seed_of(cfg);
  const std::string method = cfg.at("method").get<std::string>();
  json summary;

  if (method == "dt") {
    model::ModelConfig mc = model_of(cfg.at("model"), n_o, n_a);
    mc.rtg_scale = cfg.at("rtg_scale").is_null() ? suggest_rtg_scale(trajs) : cfg["rtg_scale"].get<double>();
    mc.seed = derive_seed(seed, 0);
    TrainConfig tc = train_config_from_json(cfg.at("train"));
    tc.seed = derive_seed(seed, 1);
    tc.jobs = ctx.jobs;
    cfg["train"] = canonical(train_config_to_json(tc));
    ctx.write_resolved(cfg);
    TrainResult r = train_offline(trajs, mc, tc);
    r.checkpoint.meta["datasets"] = cfg["datasets"];
    r.checkpoint.meta["anchors"] = anchors_of(sets);
    r.checkpoint.meta["dataset_label"] = label_of(sets);
    save_checkpoint_dir(ctx.dir / "checkpoint", r.checkpoint);
    write_loss(ctx.dir / "loss.csv", r.log);
    summary = {{"steps", r.log.size()},
               {"final_loss", r.log.empty() ? json(nullptr) : json(r.log.back().loss)},
               {"aborted", r.aborted},
               {"abort_reason", r.abort_reason}};
    write_json_file(ctx.dir / "summary.json", summary);
    if (r.aborted) throw model::NumericalFault("training aborted at " + r.abort_reason + "; last good checkpoint saved");
  } else if (method == "bc") {
    BcConfig bc = bc_config_from_json(cfg.at("bc"));
    bc.seed = derive_seed(seed, 2);
    cfg["bc"] = canonical(bc_config_to_json(bc));
    ctx.write_resolved(cfg);
    const auto r = train_bc(trajs, bc);
    json doc = bc_model_to_json(r.model);
    doc["meta"] = {{"datasets", cfg["datasets"]}, {"anchors", anchors_of(sets)}, {"dataset_label", label_of(sets)}};
    write_json_file(ctx.dir / "bc_model.json", doc);
    write_loss(ctx.dir / "loss.csv", r.log);
    summary = {{"steps", r.log.size()}, {"mse", bc_mse(r.model, trajs)}};
    write_json_file(ctx.dir / "summary.json", summary);
  } else {
    throw ValidationError("method must be 'dt' or 'bc'");
  }
  *ctx.out << "trained " << method << " on " << trajs.size() << " trajectories\n";
}

void run_adapt(json& cfg, const RunContext& ctx) {
  const auto base = model::load_checkpoint(path_of(need(cfg, "checkpoint"), ctx));
  auto ds = data::read_dataset(path_of(need(cfg, "dataset"), ctx));
  if (!cfg.at("k").is_null()) {
    const int k = cfg["k"].get<int>();
    if (k < 1 || k > static_cast<int>(ds.trajectories.size()))
      throw ValidationError("k must be in [1, " + std::to_string(ds.trajectories.size()) + "]");
    ds.trajectories.resize(static_cast<std::size_t>(k));
  }
  AdaptConfig ac = adapt_config_from_json(cfg.at("adapt"));
  ac.seed = seed_of(cfg);
  ac.jobs = ctx.jobs;
  cfg["adapt"] = canonical(adapt_config_to_json(ac));
  ctx.write_resolved(cfg);
  TrainResult r = adapt_k_shot(base, ds.trajectories, ac);
  json anchors = r.checkpoint.meta.value("anchors", json::object());
  anchors.update(anchors_of({ds}));
  r.checkpoint.meta["anchors"] = anchors;
  save_checkpoint_dir(ctx.dir / "checkpoint", r.checkpoint);
  write_loss(ctx.dir / "loss.csv", r.log);
  write_json_file(ctx.dir / "summary.json",
                  {{"k", ds.trajectories.size()},
                   {"steps", r.log.size()},
                   {"base_digest", params_digest(base.params)},
                   {"aborted", r.aborted},
                   {"abort_reason", r.abort_reason}});
  if (r.aborted) throw model::NumericalFault("adaptation aborted at " + r.abort_reason + "; last good checkpoint saved");
}

void run_eval(json& cfg, const RunContext& ctx) {
  const auto task = task_of(cfg["task"], ctx);
  const std::string kind = cfg.at("policy").get<std::string>();
  auto [policy, meta] = make_policy(cfg, task, ctx);

  // Anchors: explicit demonstrators, then explicit values, then the ones the
  // training data carried.
  std::optional<data::NormalizationAnchors> anchors;
  if (!cfg.at("demonstrators").is_null()) {
    const auto d = load_demonstrators(cfg["demonstrators"], ctx);
    if (d.task_id != task.task_id)
      throw ValidationError("demonstrators were fitted on '" + d.task_id + "', not '" + task.task_id + "'");
    anchors = d.anchors;
  } else if (!cfg.at("anchors").is_null()) {
    anchors = data::anchors_from_json(cfg["anchors"]);
  } else if (meta.contains("anchors") && meta["anchors"].contains(task.task_id)) {
    anchors = data::anchors_from_json(meta["anchors"][task.task_id]);
  }

  EvalConfig ec;
  ec.episodes = cfg.at("episodes").get<int>();
  ec.target_return = kind == "dt" ? target_of(cfg.at("target_return"), task) : 0.0;
  ec.seed = seed_of(cfg);
  if (!cfg.at("score_cap").is_null())
    ec.score_cap = std::make_pair(cfg["score_cap"].at(0).get<double>(), cfg["score_cap"].at(1).get<double>());
  ec.record_steps = cfg.at("record_steps").get<bool>();
  ec.jobs = ctx.jobs;
  ec.validate();
  ctx.write_resolved(cfg);

  TaskEval e = evaluate_policy(task, *policy, ec, anchors);
  e.method = kind == "expert" || kind == "medium" ? "demonstrator" : kind;
  std::string protocol = kind == "bc" ? "bc" : kind == "hinf" ? "hinf" : "single";
  if (meta.contains("adapt")) protocol = "k_shot(" + std::to_string(meta["adapt"].value("k", 0)) + ")";
  e.protocol = cfg.at("protocol").is_null() ? protocol : cfg["protocol"].get<std::string>();
  e.dataset = cfg.at("dataset").get<std::string>();
  if (e.dataset.empty() && (kind == "expert" || kind == "medium")) e.dataset = kind;
  if (e.dataset.empty()) e.dataset = meta.value("dataset_label", "");
  e.split = cfg.at("split").get<std::string>();
  EvalReport r;
  r.protocol = e.protocol;
  r.meta = {{"config", cfg}};
  r.rows.push_back(std::move(e));
  write_report(ctx.dir, r);
  const auto& row = r.rows[0];
  *ctx.out << task.task_id << " " << row.method << ": return " << num(row.mean_return()) << " +- " << num(row.std_return());
  if (row.anchors) *ctx.out << ", score " << num(row.score_mean()) << " +- " << num(row.score_std());
  *ctx.out << "\n";
}

struct TestEntry {
  env::TaskSpec task;
  std::string split;
  data::NormalizationAnchors anchors;
};

void run_hinf_compare(json& cfg, const RunContext& ctx) {
  std::vector<TestEntry> tests;
  std::optional<env::TaskSpec> nominal;
  if (!cfg.at("suite").is_null()) {
    const fs::path dir = path_of(need(cfg, "suite"), ctx);
    const json s = read_json_file(dir / "suite.json");
    nominal = env::task_from_json(s.at("nominal"));
    for (const auto& t : s.at("tests")) {
      const auto d = demonstrators_from_json(read_json_file(dir / t.at("demonstrators").get<std::string>()));
      tests.push_back({env::load_task_file(dir / t.at("task").get<std::string>()), t.at("split"), d.anchors});
    }
  }
  for (auto& t : cfg.at("tests")) {
    auto task = task_of(t.at("task"), ctx);
    const auto d = load_demonstrators(t.at("demonstrators"), ctx);
    if (d.task_id != task.task_id)
      throw ValidationError("demonstrators were fitted on '" + d.task_id + "', not '" + task.task_id + "'");
    tests.push_back({std::move(task), t.at("split").get<std::string>(), d.anchors});
  }
  if (!cfg.at("nominal").is_null()) nominal = task_of(cfg["nominal"], ctx);
  if (!nominal) throw ValidationError("a nominal task is required (nominal or suite)");

  std::vector<env::TaskSpec> in_tests, out_tests;
  std::map<std::string, data::NormalizationAnchors> anchors;
  for (const auto& t : tests) {
    if (t.split == "in_dist") in_tests.push_back(t.task);
    else if (t.split == "out_dist") out_tests.push_back(t.task);
    else throw ValidationError("test split must be 'in_dist' or 'out_dist', got '" + t.split + "'");
    anchors.emplace(t.task.task_id, t.anchors);
  }
  HinfComparisonConfig hc;
  hc.gammas = cfg.at("gammas").get<std::vector<double>>();
  hc.eval.episodes = cfg.at("episodes").get<int>();
  hc.eval.seed = seed_of(cfg);
  if (!cfg.at("score_cap").is_null())
    hc.eval.score_cap = std::make_pair(cfg["score_cap"].at(0).get<double>(), cfg["score_cap"].at(1).get<double>());
  hc.jobs = ctx.jobs;
  ctx.write_resolved(cfg);

  const auto r = run_hinf_comparison(*nominal, in_tests, out_tests, anchors, hc);
  write_report(ctx.dir, r.report);
  std::ostringstream grid;
  grid << "gamma,feasible,in_score,reason\n";
  for (const auto& g : r.grid)
    grid << num(g.gamma) << ',' << (g.feasible ? 1 : 0) << ',' << (g.feasible ? num(g.in_score) : "") << ",\""
         << g.reason << "\"\n";
  write_text_file(ctx.dir / "grid.csv", grid.str());
  std::ofstream t2(ctx.dir / "table2.csv", std::ios::binary);
  write_table2_csv(t2, r.report);
  *ctx.out << "selected gamma " << num(r.selected_gamma) << "\n";
}

void run_single(json& cfg, const RunContext& ctx) {
  const auto task = task_of(cfg["task"], ctx);
  SingleTaskConfig c;
  c.demo = demonstrator_config_from_json(cfg.at("demo"));
  c.n_traj = cfg.at("n_traj").get<int>();
  c.model = model_of(cfg.at("model"), task.n_o(), task.n_a());
  c.train = train_config_from_json(cfg.at("train"));
  c.bc = bc_config_from_json(cfg.at("bc"));
  c.eval.episodes = cfg.at("episodes").get<int>();
  c.eval.target_return = target_of(cfg.at("target_return"), task);
  c.seed = seed_of(cfg);
  c.eval.seed = derive_seed(c.seed, 99);
  c.jobs = ctx.jobs;
  cfg["demo"] = canonical(demonstrator_config_to_json(c.demo));
  cfg["train"] = canonical(train_config_to_json(c.train));
  cfg["bc"] = canonical(bc_config_to_json(c.bc));
  ctx.write_resolved(cfg);

  const auto r = run_single_task(task, c);
  write_json_file(ctx.dir / "demonstrators.json", demonstrators_to_json(r.demonstrators));
  for (const auto& [ds, ck] : r.dt) save_checkpoint_dir(ctx.dir / ("dt_" + ds), ck);
  for (const auto& [ds, m] : r.bc) write_json_file(ctx.dir / ("bc_" + ds + ".json"), bc_model_to_json(m));
  for (const auto& [ds, log] : r.dt_log) write_loss(ctx.dir / ("loss_dt_" + ds + ".csv"), log);
  write_report(ctx.dir, r.report);
  std::ostringstream t1;
  write_table1_csv(t1, r.report);
  write_text_file(ctx.dir / "table1.csv", t1.str());
  *ctx.out << t1.str();
}

void run_multi(json& cfg, const RunContext& ctx) {
  const auto nominal = task_of(cfg["nominal"], ctx);
  MultiTaskConfig c;
  c.n_train = cfg.at("n_train").get<int>();
  c.n_in = cfg.at("n_in").get<int>();
  c.n_out = cfg.at("n_out").get<int>();
  c.traj_per_task = cfg.at("traj_per_task").get<int>();
  c.k = cfg.at("k").get<int>();
  c.demo = demonstrator_config_from_json(cfg.at("demo"));
  c.model = model_of(cfg.at("model"), nominal.n_o(), nominal.n_a());
  c.train = train_config_from_json(cfg.at("train"));
  c.adapt = adapt_config_from_json(cfg.at("adapt"));
  c.eval.episodes = cfg.at("episodes").get<int>();
  c.eval.target_return = target_of(cfg.at("target_return"), nominal);
  c.seed = seed_of(cfg);
  c.eval.seed = derive_seed(c.seed, 99);
  c.jobs = ctx.jobs;
  cfg["demo"] = canonical(demonstrator_config_to_json(c.demo));
  cfg["train"] = canonical(train_config_to_json(c.train));
  cfg["adapt"] = canonical(adapt_config_to_json(c.adapt));
  ctx.write_resolved(cfg);

  const auto r = run_multitask(nominal, c);
  fs::create_directories(ctx.dir / "tasks");
  fs::create_directories(ctx.dir / "demonstrators");
  json suite = {{"nominal", env::task_to_json(nominal)}, {"train", json::array()}, {"tests", json::array()}};
  auto dump = [&](const env::TaskSpec& t) {
    env::save_task_file(ctx.dir / "tasks" / (t.task_id + ".json"), t);
    write_json_file(ctx.dir / "demonstrators" / (t.task_id + ".json"), demonstrators_to_json(r.demonstrators.at(t.task_id)));
    return json{{"task", "tasks/" + t.task_id + ".json"}, {"demonstrators", "demonstrators/" + t.task_id + ".json"}};
  };
  for (const auto& t : r.suite.train) suite["train"].push_back(dump(t));
  auto dump_tests = [&](const std::vector<env::TaskSpec>& tests, const char* split) {
    for (const auto& t : tests) {
      json e = dump(t);
      e["split"] = split;
      suite["tests"].push_back(std::move(e));
    }
  };
  dump_tests(r.suite.in_dist, "in_dist");
  dump_tests(r.suite.out_dist, "out_dist");
  write_json_file(ctx.dir / "suite.json", suite);
  save_checkpoint_dir(ctx.dir / "pretrained", r.pretrained);
  write_loss(ctx.dir / "loss.csv", r.log);
  write_report(ctx.dir, r.report);
  std::ostringstream t2;
  write_table2_csv(t2, r.report);
  write_text_file(ctx.dir / "table2.csv", t2.str());
  *ctx.out << t2.str();
}

void run_report(json& cfg, const RunContext& ctx) {
  json& inputs = cfg.at("inputs");
  if (!inputs.is_array() || inputs.empty()) throw ValidationError("at least one input report is required");
  EvalReport merged;
  merged.protocol = "merged";
  for (auto& in : inputs) {
    fs::path p = path_of(in, ctx);
    if (fs::is_directory(p)) p /= "report.json";
    const EvalReport r = report_from_json(read_json_file(p));
    for (const auto& row : r.rows) merged.rows.push_back(row);
  }
  merged.meta = {{"inputs", inputs}};
  ctx.write_resolved(cfg);
  write_report(ctx.dir, merged);

  // Single-task tables per task from rows without a split; one multi-task table from the rest.
  std::vector<std::string> single_tasks;
  bool any_split = false;
  for (const auto& row : merged.rows) {
    if (!row.split.empty()) any_split = true;
    else if (std::find(single_tasks.begin(), single_tasks.end(), row.task_id) == single_tasks.end())
      single_tasks.push_back(row.task_id);
  }
  for (const auto& id : single_tasks) {
    EvalReport part;
    for (const auto& row : merged.rows)
      if (row.split.empty() && row.task_id == id) part.rows.push_back(row);
    std::ostringstream t1;
    write_table1_csv(t1, part);
    const std::string name = single_tasks.size() == 1 ? "table1.csv" : "table1_" + id + ".csv";
    write_text_file(ctx.dir / name, t1.str());
    *ctx.out << name << ":\n" << t1.str();
  }
  if (any_split) {
    std::ostringstream t2;
    write_table2_csv(t2, merged);
    write_text_file(ctx.dir / "table2.csv", t2.str());
    *ctx.out << "table2.csv:\n" << t2.str();
  }
}

json no_seed(json j) {
  j.erase("seed");
  return j;
}

}  // namespace

const std::vector<CommandSpec>& commands() {
  using K = FlagKind;
  static const std::vector<CommandSpec> specs = [] {
    const json train = no_seed(train_config_to_json(TrainConfig{}));
    const json bc = no_seed(bc_config_to_json(BcConfig{}));
    const json adapt = no_seed(adapt_config_to_json(AdaptConfig{}));
    const json demo = no_seed(demonstrator_config_to_json(DemonstratorConfig{}));
    std::vector<CommandSpec> v;
    v.push_back({"env-sim",
                 "roll a policy on a task and dump per-episode trajectory CSVs",
                 true,
                 {{"task", nullptr},
                  {"policy", "zero"},
                  {"demonstrators", nullptr},
                  {"checkpoint", nullptr},
                  {"bc_model", nullptr},
                  {"gamma", nullptr},
                  {"target_return", nullptr},
                  {"episodes", 1},
                  {"dump_fields", false}},
                 {{"--task", "/task", K::kString, "builtin name or task file"},
                  {"--policy", "/policy", K::kString, "zero, lqg, hinf, expert, medium, dt or bc"},
                  {"--demonstrators", "/demonstrators", K::kString, "demonstrators.json for expert/medium"},
                  {"--checkpoint", "/checkpoint", K::kString, "checkpoint directory for dt"},
                  {"--bc-model", "/bc_model", K::kString, "bc_model.json for bc"},
                  {"--gamma", "/gamma", K::kReal, "robustness level for hinf"},
                  {"--target-return", "/target_return", K::kReal, "initial prompt for dt"},
                  {"--episodes", "/episodes", K::kInt, "number of episodes"},
                  {"--dump-fields", "/dump_fields", K::kBool, "also write the internal state per step"}},
                 run_env_sim});
    v.push_back({"fit-demonstrator",
                 "fit expert and medium static-gain demonstrators and their anchors",
                 true,
                 {{"task", nullptr}, {"demo", demo}},
                 {{"--task", "/task", K::kString, "builtin name or task file"},
                  {"--iterations", "/demo/iterations", K::kInt, "search iterations"},
                  {"--expert-noise", "/demo/expert_noise", K::kReal, "expert action noise std"},
                  {"--medium-noise", "/demo/medium_noise", K::kReal, "medium action noise std"},
                  {"--anchor-episodes", "/demo/anchor_episodes", K::kInt, "episodes per anchor"}},
                 run_fit_demonstrator});
    v.push_back({"gen-data",
                 "collect a trajectory dataset from a fitted demonstrator",
                 true,
                 {{"task", nullptr}, {"demonstrators", nullptr}, {"role", "expert"}, {"n_traj", 1000}},
                 {{"--task", "/task", K::kString, "builtin name or task file"},
                  {"--demonstrators", "/demonstrators", K::kString, "demonstrators.json"},
                  {"--role", "/role", K::kString, "expert or medium"},
                  {"--n-traj", "/n_traj", K::kInt, "number of trajectories"}},
                 run_gen_data});
    v.push_back({"train",
                 "train a transformer (or the BC baseline) on one or more datasets",
                 true,
                 {{"datasets", json::array()},
                  {"method", "dt"},
                  {"model", "tiny"},
                  {"rtg_scale", nullptr},
                  {"train", train},
                  {"bc", bc}},
                 {{"--dataset", "/datasets", K::kList, "dataset files (repeatable)"},
                  {"--method", "/method", K::kString, "dt or bc"},
                  {"--model", "/model", K::kString, "tiny, desk or paper"},
                  {"--rtg-scale", "/rtg_scale", K::kReal, "return-to-go divisor"},
                  {"--epochs", "/train/epochs", K::kInt, "training epochs"},
                  {"--batch-size", "/train/batch_size", K::kInt, "windows per batch"},
                  {"--lr", "/train/lr", K::kReal, "learning rate"}},
                 run_train});
    v.push_back({"adapt",
                 "attach fresh adapters to a checkpoint and fit them on k demonstrations",
                 true,
                 {{"checkpoint", nullptr}, {"dataset", nullptr}, {"k", nullptr}, {"adapt", adapt}},
                 {{"--checkpoint", "/checkpoint", K::kString, "base checkpoint directory"},
                  {"--dataset", "/dataset", K::kString, "demonstration dataset"},
                  {"--k", "/k", K::kInt, "use the first k trajectories"},
                  {"--epochs", "/adapt/epochs", K::kInt, "adaptation epochs"},
                  {"--lr", "/adapt/lr", K::kReal, "learning rate"},
                  {"--adapt-all", "/adapt/adapt_all", K::kBool, "train every base weight instead of adapters"}},
                 run_adapt});
    v.push_back({"eval",
                 "evaluate a policy over seeded episodes and write a report",
                 true,
                 {{"task", nullptr},
                  {"policy", "dt"},
                  {"checkpoint", nullptr},
                  {"bc_model", nullptr},
                  {"demonstrators", nullptr},
                  {"gamma", nullptr},
                  {"anchors", nullptr},
                  {"target_return", nullptr},
                  {"episodes", 20},
                  {"score_cap", nullptr},
                  {"record_steps", false},
                  {"protocol", nullptr},
                  {"dataset", ""},
                  {"split", ""}},
                 {{"--task", "/task", K::kString, "builtin name or task file"},
                  {"--policy", "/policy", K::kString, "dt, bc, expert, medium, lqg, hinf or zero"},
                  {"--checkpoint", "/checkpoint", K::kString, "checkpoint directory for dt"},
                  {"--bc-model", "/bc_model", K::kString, "bc_model.json for bc"},
                  {"--demonstrators", "/demonstrators", K::kString, "demonstrators.json (anchors, expert/medium)"},
                  {"--gamma", "/gamma", K::kReal, "robustness level for hinf"},
                  {"--target-return", "/target_return", K::kReal, "initial prompt for dt"},
                  {"--episodes", "/episodes", K::kInt, "number of episodes"},
                  {"--record-steps", "/record_steps", K::kBool, "keep per-step rewards and prompts"},
                  {"--protocol", "/protocol", K::kString, "protocol tag of the report row"},
                  {"--dataset-label", "/dataset", K::kString, "training-data label of the report row"},
                  {"--split", "/split", K::kString, "in_dist or out_dist"}},
                 run_eval});
    v.push_back({"hinf-compare",
                 "select the H-infinity robustness level on in-distribution tests and apply it out of distribution",
                 true,
                 {{"nominal", nullptr},
                  {"suite", nullptr},
                  {"tests", json::array()},
                  {"gammas", default_gamma_grid()},
                  {"episodes", 20},
                  {"score_cap", json::array({-1.0, 2.0})}},
                 {{"--nominal", "/nominal", K::kString, "nominal task"},
                  {"--suite", "/suite", K::kString, "multitask run directory holding suite.json"},
                  {"--episodes", "/episodes", K::kInt, "episodes per test"}},
                 run_hinf_compare});
    v.push_back({"single-task",
                 "demonstrators, expert and medium datasets, DT and BC training and evaluation on one task",
                 true,
                 {{"task", nullptr},
                  {"n_traj", 1000},
                  {"model", "tiny"},
                  {"train", train},
                  {"bc", bc},
                  {"demo", demo},
                  {"episodes", 20},
                  {"target_return", nullptr}},
                 {{"--task", "/task", K::kString, "builtin name or task file"},
                  {"--n-traj", "/n_traj", K::kInt, "trajectories per dataset"},
                  {"--model", "/model", K::kString, "tiny, desk or paper"},
                  {"--epochs", "/train/epochs", K::kInt, "training epochs"},
                  {"--episodes", "/episodes", K::kInt, "evaluation episodes"},
                  {"--target-return", "/target_return", K::kReal, "initial prompt"}},
                 run_single});
    v.push_back({"multitask",
                 "pretrain on perturbed training tasks, evaluate zero-shot and k-shot on test tasks",
                 true,
                 {{"nominal", nullptr},
                  {"n_train", 30},
                  {"n_in", 9},
                  {"n_out", 9},
                  {"traj_per_task", 100},
                  {"k", 10},
                  {"model", "tiny"},
                  {"train", train},
                  {"adapt", adapt},
                  {"demo", demo},
                  {"episodes", 20},
                  {"target_return", nullptr}},
                 {{"--nominal", "/nominal", K::kString, "nominal task"},
                  {"--n-train", "/n_train", K::kInt, "training tasks"},
                  {"--n-in", "/n_in", K::kInt, "in-distribution tests"},
                  {"--n-out", "/n_out", K::kInt, "out-of-distribution tests"},
                  {"--traj-per-task", "/traj_per_task", K::kInt, "expert trajectories per training task"},
                  {"--k", "/k", K::kInt, "demonstrations per adaptation"},
                  {"--model", "/model", K::kString, "tiny, desk or paper"},
                  {"--epochs", "/train/epochs", K::kInt, "pretraining epochs"},
                  {"--adapt-epochs", "/adapt/epochs", K::kInt, "adaptation epochs"},
                  {"--episodes", "/episodes", K::kInt, "evaluation episodes"}},
                 run_multi});
    v.push_back({"report",
                 "merge evaluation reports into the single-task and multi-task summary tables",
                 false,
                 {{"inputs", json::array()}},
                 {{"--input", "/inputs", K::kList, "report.json files or run directories (repeatable)"}},
                 run_report});
    return v;
  }();
  return specs;
}

}  // namespace dtc::cli
