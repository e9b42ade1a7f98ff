#pragma once

#include <vector>

#include "dtc/data/trajectory.hpp"

namespace dtc::data {

/// Suffix sums: out[t] = rew[t] + rew[t+1] + ... Requires a non-empty input.
Vec reward_to_go(const Vec& rew);

/// K consecutive steps ending at `end`, left-padded with zeros. Slot k holds
/// relative timestep k; mask[k] is true for real data.
struct ContextWindow {
  Vec rtg;  // K
  Mat obs;  // K x n_o
  Mat act;  // K x n_a
  std::vector<int> timesteps;
  std::vector<bool> mask;
  int end = 0;

  int K() const { return static_cast<int>(rtg.size()); }
  int n_real() const;
};

/// Window over steps max(0, end-K+1)..end of `traj`. `rtg` is the trajectory's
/// reward-to-go (passed in so callers can reuse it across windows).
ContextWindow make_window(const Trajectory& traj, const Vec& rtg, int end, int K);

/// One window per end index 0..T.
std::vector<ContextWindow> make_windows(const Trajectory& traj, int K);

}  // namespace dtc::data
