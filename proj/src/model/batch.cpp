#include "dtc/model/batch.hpp"

#include <algorithm>

namespace dtc::model {

int Batch::n_real() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }

void Batch::validate() const {
  const std::size_t n = static_cast<std::size_t>(B) * K;
  require(B >= 0 && K >= 1, "Batch: K must be >= 1");
  require(rtg.rows() == B && rtg.cols() == K, "Batch: rtg must be B x K");
  require(static_cast<std::size_t>(obs.rows()) == n && static_cast<std::size_t>(act.rows()) == n,
          "Batch: obs/act must have B*K rows");
  require(timesteps.size() == n && mask.size() == n, "Batch: timesteps/mask must have B*K entries");
}

Batch Batch::slice(int b0, int b1) const {
  require(0 <= b0 && b0 <= b1 && b1 <= B, "Batch::slice: range out of bounds");
  Batch s;
  s.B = b1 - b0;
  s.K = K;
  s.rtg = rtg.middleRows(b0, s.B);
  s.obs = obs.middleRows(static_cast<Eigen::Index>(b0) * K, static_cast<Eigen::Index>(s.B) * K);
  s.act = act.middleRows(static_cast<Eigen::Index>(b0) * K, static_cast<Eigen::Index>(s.B) * K);
  s.timesteps.assign(timesteps.begin() + static_cast<std::ptrdiff_t>(b0) * K,
                     timesteps.begin() + static_cast<std::ptrdiff_t>(b1) * K);
  s.mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(b0) * K, mask.begin() + static_cast<std::ptrdiff_t>(b1) * K);
  return s;
}

Batch make_batch(const std::vector<const data::ContextWindow*>& windows) {
  require(!windows.empty(), "make_batch: no windows");
  Batch b;
  b.B = static_cast<int>(windows.size());
  b.K = windows[0]->K();
  const auto n_o = windows[0]->obs.cols(), n_a = windows[0]->act.cols();
  b.rtg.resize(b.B, b.K);
  b.obs.resize(static_cast<Eigen::Index>(b.B) * b.K, n_o);
  b.act.resize(static_cast<Eigen::Index>(b.B) * b.K, n_a);
  b.timesteps.reserve(static_cast<std::size_t>(b.B) * b.K);
  b.mask.reserve(static_cast<std::size_t>(b.B) * b.K);
  for (int i = 0; i < b.B; ++i) {
    const auto& w = *windows[i];
    require(w.K() == b.K && w.obs.cols() == n_o && w.act.cols() == n_a, "make_batch: windows differ in shape");
    b.rtg.row(i) = w.rtg.transpose();
    b.obs.middleRows(static_cast<Eigen::Index>(i) * b.K, b.K) = w.obs;
    b.act.middleRows(static_cast<Eigen::Index>(i) * b.K, b.K) = w.act;
    b.timesteps.insert(b.timesteps.end(), w.timesteps.begin(), w.timesteps.end());
    for (bool m : w.mask) b.mask.push_back(m ? 1 : 0);
  }
  return b;
}

Batch make_batch(const std::vector<data::ContextWindow>& windows) {
  std::vector<const data::ContextWindow*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return make_batch(ptrs);
}

}  // namespace dtc::model
