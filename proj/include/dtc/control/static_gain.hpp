#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"

#include "dtc/env/policy.hpp"

namespace dtc::control {

/// Memoryless output feedback a = -F o + bias.
struct StaticGain {
  Mat F;     // n_a x n_o
  Vec bias;  // n_a

  static StaticGain zero(int n_a, int n_o) { return {Mat::Zero(n_a, n_o), Vec::Zero(n_a)}; }
  Vec apply(const Vec& o) const { return bias - F * o; }
  void validate() const;
};

nlohmann::json static_gain_to_json(const StaticGain& g);
StaticGain static_gain_from_json(const nlohmann::json& j);

/// Static gain plus optional N(0, noise_std^2 I) exploration noise on the action.
class StaticGainPolicy final : public env::Policy {
 public:
  explicit StaticGainPolicy(StaticGain gain, double noise_std = 0.0);
  void reset(std::uint64_t seed) override { rng_ = Rng(seed); }
  Vec act(const Vec& obs) override;
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<StaticGainPolicy>(*this); }
  std::string name() const override { return noise_std_ > 0.0 ? "static_gain_noisy" : "static_gain"; }
  const StaticGain& gain() const { return gain_; }
  double noise_std() const { return noise_std_; }

 private:
  StaticGain gain_;
  double noise_std_;
  Rng rng_;
};

struct SearchConfig {
  int population = 32;
  int iterations = 150;
  int episodes_per_eval = 8;
  std::uint64_t seed = 0;
  double init_std = 0.5;
  double min_std = 1e-3;
  double elite_fraction = 0.25;
  /// Mean and std move this fraction of the way to the elite statistics per iteration.
  double smoothing = 0.1;
  /// Stop early when the incumbent improves by less than plateau_tol (relative)
  /// over `patience` iterations. patience <= 0 disables plateau detection.
  int patience = 10;
  double plateau_tol = 1e-4;
  int jobs = 1;
};

struct TracePoint {
  int iteration = 0;
  double mean_return = 0.0;  // incumbent
  double best_return = 0.0;  // best member of this iteration's population
};

struct SearchResult {
  StaticGain expert;
  StaticGain medium;
  int medium_iteration = 0;
  std::vector<TracePoint> trace;
};

/// Mean return of `gain` (noise-free actions) over `episodes` environment seeds
/// derived from `seed`. A diverging episode makes the mean -infinity.
double evaluate_gain(const env::TaskSpec& task, const StaticGain& gain, int episodes, std::uint64_t seed);

/// Smoothed cross-entropy search over (F, bias) starting from the zero gain.
/// The distribution center is the iterate and is kept only when it does not
/// score worse than the incumbent on the fixed evaluation seeds, so the
/// incumbent's score never decreases. `medium` is the incumbent at the first iteration whose
/// score reaches 25% of the improvement from the initial to the final score.
SearchResult fit_static_gain(const env::TaskSpec& task, const SearchConfig& cfg,
                             const StaticGain* initial = nullptr);

/// CSV with header iteration,mean_return,best_return.
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);

}  // namespace dtc::control
