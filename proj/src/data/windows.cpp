#include "dtc/data/windows.hpp"

#include <algorithm>

namespace dtc::data {

Vec reward_to_go(const Vec& rew) {
  require(rew.size() > 0, "reward_to_go: empty reward sequence");
  Vec out(rew.size());
  double acc = 0.0;
  for (Eigen::Index t = rew.size() - 1; t >= 0; --t) {
    acc += rew[t];
    out[t] = acc;
  }
  return out;
}

int ContextWindow::n_real() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }

ContextWindow make_window(const Trajectory& traj, const Vec& rtg, int end, int K) {
  require(K >= 1, "make_window: K must be >= 1");
  require(end >= 0 && end < traj.length(), "make_window: end index out of range");
  require(rtg.size() == traj.length(), "make_window: reward-to-go length mismatch");
  ContextWindow w;
  w.rtg = Vec::Zero(K);
  w.obs = Mat::Zero(K, traj.obs.cols());
  w.act = Mat::Zero(K, traj.act.cols());
  w.timesteps.resize(K);
  w.mask.assign(K, false);
  w.end = end;
  const int first = std::max(0, end - K + 1);
  const int pad = K - (end - first + 1);
  for (int k = 0; k < K; ++k) w.timesteps[k] = k;
  for (int t = first; t <= end; ++t) {
    const int k = pad + (t - first);
    w.rtg[k] = rtg[t];
    w.obs.row(k) = traj.obs.row(t);
    w.act.row(k) = traj.act.row(t);
    w.mask[k] = true;
  }
  return w;
}

std::vector<ContextWindow> make_windows(const Trajectory& traj, int K) {
  require(K >= 1, "make_windows: K must be >= 1");
  std::vector<ContextWindow> out;
  if (traj.length() == 0) return out;
  const Vec rtg = reward_to_go(traj.rew);
  out.reserve(traj.length());
  for (int t = 0; t < traj.length(); ++t) out.push_back(make_window(traj, rtg, t, K));
  return out;
}

}  // namespace dtc::data
