#include "dtc/protocols/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "dtc/control/hinf.hpp"
#include "dtc/data/dataset.hpp"

namespace dtc::protocols {

using nlohmann::json;

namespace {

void put_num(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  out << buf;
}

}  // namespace

SingleTaskResult run_single_task(const env::TaskSpec& task, const SingleTaskConfig& cfg) {
  task.validate();
  cfg.eval.validate();
  SingleTaskResult res;
  DemonstratorConfig dc = cfg.demo;
  dc.seed = derive_seed(cfg.seed, 0);
  dc.search.jobs = cfg.jobs;
  res.demonstrators = fit_demonstrators(task, dc);
  const Demonstrators& d = res.demonstrators;

  EvalConfig ec = cfg.eval;
  ec.jobs = cfg.jobs;
  res.report.protocol = "single";
  res.report.meta = {{"task", task.task_id},
                     {"seed", cfg.seed},
                     {"n_traj", cfg.n_traj},
                     {"eval", eval_config_to_json(ec)},
                     {"demonstrators", demonstrators_to_json(d)}};

  const char* roles[] = {"expert", "medium"};
  for (std::uint64_t r = 0; r < 2; ++r) {
    const std::string role = roles[r];
    const auto trajs = data::rollout_collect(task, *d.policy(role), cfg.n_traj, derive_seed(cfg.seed, 10 + r));

    model::ModelConfig mc = cfg.model;
    mc.n_o = task.n_o();
    mc.n_a = task.n_a();
    mc.rtg_scale = suggest_rtg_scale(trajs);
    mc.seed = derive_seed(cfg.seed, 20 + r);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 30 + r);
    tc.jobs = cfg.jobs;
    TrainResult tr = train_offline(trajs, mc, tc);
    if (tr.aborted) throw model::NumericalFault("training on the " + role + " dataset aborted: " + tr.abort_reason);
    res.dt_log[role] = tr.log;

    BcConfig bc = cfg.bc;
    bc.hidden = mc.d_model;
    bc.seed = derive_seed(cfg.seed, 40 + r);
    auto bm = std::make_shared<BcModel>(train_bc(trajs, bc).model);

    TaskEval demo = evaluate_policy(task, *d.policy(role), ec, d.anchors);
    demo.protocol = "single";
    demo.method = "demonstrator";
    demo.dataset = role;
    TaskEval bce = evaluate_policy(task, BcPolicy(bm), ec, d.anchors);
    bce.protocol = "bc";
    bce.method = "bc";
    bce.dataset = role;
    auto ck = std::make_shared<const model::Checkpoint>(tr.checkpoint);
    TaskEval dte = rollout_dt(ck, task, ec, d.anchors);
    dte.protocol = "single";
    dte.dataset = role;
    res.report.rows.push_back(std::move(demo));
    res.report.rows.push_back(std::move(bce));
    res.report.rows.push_back(std::move(dte));
    res.dt.emplace(role, std::move(tr.checkpoint));
    res.bc.emplace(role, *bm);
  }
  return res;
}

void write_table1_csv(std::ostream& out, const EvalReport& r) {
  const char* methods[] = {"demonstrator", "bc", "dt"};
  out << "dataset";
  for (const char* m : methods) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  std::vector<std::string> datasets;
  for (const auto& e : r.rows)
    if (std::find(datasets.begin(), datasets.end(), e.dataset) == datasets.end()) datasets.push_back(e.dataset);
  for (const auto& ds : datasets) {
    out << ds;
    for (const char* m : methods) {
      const TaskEval* hit = nullptr;
      for (const auto& e : r.rows)
        if (e.dataset == ds && e.method == m) hit = &e;
      out << ',';
      if (hit) put_num(out, hit->score_mean());
      out << ',';
      if (hit) put_num(out, hit->score_std());
    }
    out << '\n';
  }
}

MultiTaskResult run_multitask(const env::TaskSpec& nominal, const MultiTaskConfig& cfg) {
  nominal.validate();
  cfg.eval.validate();
  require(cfg.n_train >= 1 && cfg.k >= 1 && cfg.traj_per_task >= 1, "run_multitask: counts must be positive");
  MultiTaskResult res;
  res.suite = data::build_task_suite(nominal, cfg.n_train, cfg.n_in, cfg.n_out, derive_seed(cfg.seed, 0),
                                     cfg.sizes_override);

  DemonstratorConfig dc = cfg.demo;
  dc.search.jobs = cfg.jobs;
  std::uint64_t stream = 0;
  auto fit = [&](const env::TaskSpec& t) {
    dc.seed = derive_seed(derive_seed(cfg.seed, 1), stream++);
    res.demonstrators.emplace(t.task_id, fit_demonstrators(t, dc));
  };
  for (const auto& t : res.suite.train) fit(t);
  for (const auto& t : res.suite.in_dist) fit(t);
  for (const auto& t : res.suite.out_dist) fit(t);

  std::vector<data::Trajectory> pooled;
  for (std::size_t i = 0; i < res.suite.train.size(); ++i) {
    const auto& t = res.suite.train[i];
    auto trajs = data::rollout_collect(t, *res.demonstrators.at(t.task_id).policy("expert"), cfg.traj_per_task,
                                       derive_seed(derive_seed(cfg.seed, 2), i));
    for (auto& x : trajs) pooled.push_back(std::move(x));
  }

  model::ModelConfig mc = cfg.model;
  mc.n_o = nominal.n_o();
  mc.n_a = nominal.n_a();
  mc.rtg_scale = suggest_rtg_scale(pooled);
  mc.seed = derive_seed(cfg.seed, 3);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 4);
  tc.jobs = cfg.jobs;
  TrainResult tr = train_offline(pooled, mc, tc);
  if (tr.aborted) throw model::NumericalFault("multi-task training aborted: " + tr.abort_reason);
  res.pretrained = std::move(tr.checkpoint);
  res.log = std::move(tr.log);
  const auto base = std::make_shared<const model::Checkpoint>(res.pretrained);

  res.report.protocol = "multitask";
  const std::string kshot = "k_shot(" + std::to_string(cfg.k) + ")";
  std::uint64_t test_index = 0;
  auto run_tests = [&](const std::vector<env::TaskSpec>& tests, const std::string& split) {
    for (const auto& t : tests) {
      const std::uint64_t j = test_index++;
      const Demonstrators& d = res.demonstrators.at(t.task_id);
      EvalConfig ec = cfg.eval;
      ec.seed = derive_seed(cfg.eval.seed, j);
      ec.jobs = cfg.jobs;

      TaskEval zero = rollout_dt(base, t, ec, d.anchors);
      zero.protocol = "zero_shot";
      zero.dataset = "multitask";
      zero.split = split;

      const auto demos = data::rollout_collect(t, *d.policy("expert"), cfg.k, derive_seed(derive_seed(cfg.seed, 5), j));
      AdaptConfig ac = cfg.adapt;
      ac.seed = derive_seed(derive_seed(cfg.seed, 6), j);
      ac.jobs = cfg.jobs;
      TrainResult adapted = adapt_k_shot(res.pretrained, demos, ac);
      if (adapted.aborted) throw model::NumericalFault("adaptation on '" + t.task_id + "' aborted: " + adapted.abort_reason);
      TaskEval few = rollout_dt(std::make_shared<const model::Checkpoint>(std::move(adapted.checkpoint)), t, ec, d.anchors);
      few.protocol = kshot;
      few.dataset = "multitask";
      few.split = split;
      res.report.rows.push_back(std::move(zero));
      res.report.rows.push_back(std::move(few));
    }
  };
  run_tests(res.suite.in_dist, "in_dist");
  run_tests(res.suite.out_dist, "out_dist");

  res.report.meta = {{"nominal", nominal.task_id},
                     {"seed", cfg.seed},
                     {"k", cfg.k},
                     {"n_train", cfg.n_train},
                     {"traj_per_task", cfg.traj_per_task},
                     {"eval", eval_config_to_json(cfg.eval)},
                     {"adapt", adapt_config_to_json(cfg.adapt)},
                     {"pretrained_digest", params_digest(res.pretrained.params)}};
  res.report.meta["cells"] = multitask_cells(res.report);
  return res;
}

json multitask_cells(const EvalReport& r) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& e : r.rows) {
    if (e.split.empty()) continue;
    const auto key = std::make_pair(e.split, e.protocol);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(e.score_mean());
  }
  json cells = json::array();
  for (const auto& key : keys) {
    const auto [m, s] = mean_std(groups[key]);
    cells.push_back({{"split", key.first},
                     {"protocol", key.second},
                     {"n_tasks", groups[key].size()},
                     {"score_mean", m},
                     {"score_std", s}});
  }
  return cells;
}

void write_table2_csv(std::ostream& out, const EvalReport& r) {
  out << "split,protocol,n_tasks,score_mean,score_std\n";
  for (const auto& c : multitask_cells(r)) {
    out << c["split"].get<std::string>() << ',' << c["protocol"].get<std::string>() << ','
        << c["n_tasks"].get<std::size_t>() << ',';
    put_num(out, c["score_mean"].get<double>());
    out << ',';
    put_num(out, c["score_std"].get<double>());
    out << '\n';
  }
}

std::vector<double> default_gamma_grid() { return {0.5, 1, 2, 3, 4, 5, 10, 20, 50, 100, 200, 500, 1000}; }

HinfComparisonResult run_hinf_comparison(const env::TaskSpec& nominal, const std::vector<env::TaskSpec>& in_tests,
                                         const std::vector<env::TaskSpec>& out_tests,
                                         const std::map<std::string, data::NormalizationAnchors>& anchors,
                                         const HinfComparisonConfig& cfg) {
  require(nominal.is_linear(), "run_hinf_comparison: the nominal task must be linear");
  require(!in_tests.empty(), "run_hinf_comparison: at least one in-distribution test is required");
  require(!cfg.gammas.empty(), "run_hinf_comparison: empty gamma grid");
  EvalConfig ec = cfg.eval;
  if (!ec.score_cap) ec.score_cap = std::make_pair(-1.0, 2.0);
  ec.jobs = cfg.jobs;
  ec.validate();
  auto anchor_of = [&](const env::TaskSpec& t) {
    require(t.is_linear(), "run_hinf_comparison: test '" + t.task_id + "' is not linear");
    auto it = anchors.find(t.task_id);
    if (it == anchors.end()) throw ValidationError("no anchors for test task '" + t.task_id + "'");
    return it->second;
  };

  HinfComparisonResult res;
  std::optional<control::HinfController> best;
  std::vector<TaskEval> best_rows;
  double best_score = -INFINITY;
  for (double g : cfg.gammas) {
    GammaRow row;
    row.gamma = g;
    auto sol = control::solve_hinf_central(nominal.linear(), nominal.reward, g);
    if (auto* bad = std::get_if<control::HinfInfeasible>(&sol)) {
      row.reason = bad->reason;
      res.grid.push_back(row);
      continue;
    }
    row.feasible = true;
    const auto& ctrl = std::get<control::HinfController>(sol);
    std::vector<TaskEval> rows;
    double sum = 0.0;
    for (const auto& t : in_tests) {
      TaskEval e = evaluate_policy(t, control::HinfPolicy(ctrl), ec, anchor_of(t));
      sum += e.score_mean();
      rows.push_back(std::move(e));
    }
    row.in_score = sum / static_cast<double>(in_tests.size());
    if (row.in_score > best_score) {
      best_score = row.in_score;
      best = ctrl;
      best_rows = std::move(rows);
    }
    res.grid.push_back(row);
  }
  if (!best) throw SolverFailure("run_hinf_comparison: no gamma in the grid is feasible");
  res.selected_gamma = best->gamma;

  res.report.protocol = "hinf";
  for (auto& e : best_rows) {
    e.split = "in_dist";
    res.report.rows.push_back(std::move(e));
  }
  for (const auto& t : out_tests) {
    TaskEval e = evaluate_policy(t, control::HinfPolicy(*best), ec, anchor_of(t));
    e.split = "out_dist";
    res.report.rows.push_back(std::move(e));
  }
  for (auto& e : res.report.rows) {
    e.protocol = "hinf";
    e.method = "hinf";
  }
  res.report.meta = hinf_comparison_to_json(res);
  res.report.meta["cells"] = multitask_cells(res.report);
  return res;
}

json hinf_comparison_to_json(const HinfComparisonResult& r) {
  json grid = json::array();
  for (const auto& g : r.grid) {
    json j = {{"gamma", g.gamma}, {"feasible", g.feasible}};
    if (g.feasible) j["in_score"] = g.in_score;
    else j["reason"] = g.reason;
    grid.push_back(std::move(j));
  }
  return {{"selected_gamma", r.selected_gamma}, {"grid", std::move(grid)}};
}

}  // namespace dtc::protocols
