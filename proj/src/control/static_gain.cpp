#include "dtc/control/static_gain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "dtc/env/io.hpp"

namespace dtc::control {

void StaticGain::validate() const {
  require(F.rows() == bias.size(), "StaticGain: F rows must equal bias length");
  require(F.allFinite() && bias.allFinite(), "StaticGain: non-finite entry");
}

nlohmann::json static_gain_to_json(const StaticGain& g) {
  return {{"F", env::matrix_to_json(g.F)}, {"bias", env::vector_to_json(g.bias)}};
}

StaticGain static_gain_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("F") || !j.contains("bias"))
    throw ValidationError("static gain: expected keys 'F' and 'bias'");
  StaticGain g{env::matrix_from_json(j["F"], "F"), env::vector_from_json(j["bias"], "bias")};
  if (g.F.rows() != g.bias.size()) throw ValidationError("static gain: F rows must equal bias length");
  return g;
}

StaticGainPolicy::StaticGainPolicy(StaticGain gain, double noise_std)
    : gain_(std::move(gain)), noise_std_(noise_std) {
  gain_.validate();
  require(noise_std_ >= 0.0, "StaticGainPolicy: noise_std must be >= 0");
}

Vec StaticGainPolicy::act(const Vec& obs) {
  require(obs.size() == gain_.F.cols(), "StaticGainPolicy: observation length mismatch");
  Vec a = gain_.apply(obs);
  if (noise_std_ > 0.0) a += rng_.normal_vector(a.size(), noise_std_);
  return a;
}

double evaluate_gain(const env::TaskSpec& task, const StaticGain& gain, int episodes, std::uint64_t seed) {
  require(episodes >= 1, "evaluate_gain: episodes must be >= 1");
  env::Environment e(task);
  StaticGainPolicy policy(gain);
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    const data::Trajectory t = env::run_episode(e, policy, derive_seed(seed, static_cast<std::uint64_t>(i)), 0);
    if (t.faulted) return -std::numeric_limits<double>::infinity();
    total += t.total_return();
  }
  return total / episodes;
}

namespace {

Vec pack(const StaticGain& g) {
  Vec v(g.F.size() + g.bias.size());
  v.head(g.F.size()) = Eigen::Map<const Vec>(g.F.data(), g.F.size());
  v.tail(g.bias.size()) = g.bias;
  return v;
}

StaticGain unpack(const Vec& v, int n_a, int n_o) {
  StaticGain g;
  g.F = Eigen::Map<const Mat>(v.data(), n_a, n_o);
  g.bias = v.tail(n_a);
  return g;
}

// Scores candidates with up to `jobs` threads; results land by index.
std::vector<double> score_all(const env::TaskSpec& task, const std::vector<Vec>& cands, int n_a, int n_o,
                              int episodes, std::uint64_t eval_seed, int jobs) {
  std::vector<double> scores(cands.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < cands.size(); i += stride)
      scores[i] = evaluate_gain(task, unpack(cands[i], n_a, n_o), episodes, eval_seed);
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, cands.size());
  if (n_threads <= 1) {
    work(0, 1);
    return scores;
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(work, k, n_threads);
  for (auto& th : pool) th.join();
  return scores;
}

}  // namespace

SearchResult fit_static_gain(const env::TaskSpec& task, const SearchConfig& cfg, const StaticGain* initial) {
  require(cfg.iterations >= 0, "fit_static_gain: iterations must be >= 0");
  require(cfg.population >= 2, "fit_static_gain: population must be >= 2");
  require(cfg.episodes_per_eval >= 1, "fit_static_gain: episodes_per_eval must be >= 1");
  require(cfg.elite_fraction > 0.0 && cfg.elite_fraction <= 1.0, "fit_static_gain: elite_fraction in (0, 1]");
  require(cfg.smoothing > 0.0 && cfg.smoothing <= 1.0, "fit_static_gain: smoothing in (0, 1]");
  task.validate();
  const int n_a = task.n_a(), n_o = task.n_o();
  const StaticGain start = initial ? *initial : StaticGain::zero(n_a, n_o);
  require(start.F.rows() == n_a && start.F.cols() == n_o, "fit_static_gain: initial gain has wrong shape");

  const std::uint64_t eval_seed = derive_seed(cfg.seed, 1);
  Rng rng(derive_seed(cfg.seed, 2));

  Vec incumbent = pack(start);
  double incumbent_score = evaluate_gain(task, start, cfg.episodes_per_eval, eval_seed);
  Vec mean = incumbent;
  Vec std_dev = Vec::Constant(incumbent.size(), cfg.init_std);
  const int n_elite = std::max(1, static_cast<int>(std::lround(cfg.elite_fraction * cfg.population)));

  SearchResult res;
  res.trace.push_back({0, incumbent_score, incumbent_score});
  std::vector<Vec> incumbents{incumbent};

  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<Vec> cands(static_cast<std::size_t>(cfg.population));
    for (auto& c : cands) c = mean + std_dev.cwiseProduct(rng.normal_vector(mean.size()));
    const std::vector<double> scores = score_all(task, cands, n_a, n_o, cfg.episodes_per_eval, eval_seed, cfg.jobs);

    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double pop_best = scores[order[0]];
    if (!std::isfinite(pop_best) && !std::isfinite(incumbent_score))
      throw SolverFailure("fit_static_gain: every candidate diverged at iteration " + std::to_string(it) +
                          " (task '" + task.task_id + "')");

    Vec elite_mean = Vec::Zero(mean.size());
    for (int k = 0; k < n_elite; ++k) elite_mean += cands[order[static_cast<std::size_t>(k)]];
    elite_mean /= n_elite;
    Vec var = Vec::Zero(mean.size());
    for (int k = 0; k < n_elite; ++k) var += (cands[order[static_cast<std::size_t>(k)]] - elite_mean).cwiseAbs2();
    var /= n_elite;
    mean += cfg.smoothing * (elite_mean - mean);
    std_dev += cfg.smoothing * (var.cwiseSqrt() - std_dev);
    std_dev = std_dev.cwiseMax(cfg.min_std);

    // The distribution center is the iterate; it replaces the incumbent only
    // when it scores at least as well.
    const double center_score = evaluate_gain(task, unpack(mean, n_a, n_o), cfg.episodes_per_eval, eval_seed);
    if (center_score >= incumbent_score || !std::isfinite(incumbent_score)) {
      incumbent = mean;
      incumbent_score = center_score;
    }

    res.trace.push_back({it, incumbent_score, pop_best});
    incumbents.push_back(incumbent);

    if (cfg.patience > 0 && it >= cfg.patience) {
      const double past = res.trace[static_cast<std::size_t>(it - cfg.patience)].mean_return;
      if (std::isfinite(past) && incumbent_score - past <= cfg.plateau_tol * std::max(1.0, std::abs(past))) break;
    }
  }

  if (!std::isfinite(incumbent_score))
    throw SolverFailure("fit_static_gain: no stabilizing gain found for task '" + task.task_id + "'");

  res.expert = unpack(incumbent, n_a, n_o);
  const double first = res.trace.front().mean_return;
  const double last = res.trace.back().mean_return;
  std::size_t medium_idx = res.trace.size() - 1;
  if (std::isfinite(first)) {
    const double threshold = first + 0.25 * (last - first);
    for (std::size_t i = 0; i < res.trace.size(); ++i)
      if (res.trace[i].mean_return >= threshold) {
        medium_idx = i;
        break;
      }
  } else {
    // The initial gain diverges: the first finite incumbent counts as the start.
    std::size_t k = 0;
    while (!std::isfinite(res.trace[k].mean_return)) ++k;
    const double threshold = res.trace[k].mean_return + 0.25 * (last - res.trace[k].mean_return);
    for (medium_idx = k; res.trace[medium_idx].mean_return < threshold; ++medium_idx) {}
  }
  res.medium = unpack(incumbents[medium_idx], n_a, n_o);
  res.medium_iteration = static_cast<int>(medium_idx);
  return res;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  out << "iteration,mean_return,best_return\n";
  char buf[128];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", p.iteration, p.mean_return, p.best_return);
    out << buf;
  }
}

}  // namespace dtc::control
