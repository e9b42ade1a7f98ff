#pragma once

#include <vector>

#include "dtc/data/windows.hpp"

namespace dtc::model {

/// Stacked context windows. Sample b, slot k lives in row b*K + k of obs/act.
struct Batch {
  int B = 0;
  int K = 0;
  Mat rtg;                     // B x K
  Mat obs;                     // (B*K) x n_o
  Mat act;                     // (B*K) x n_a
  std::vector<int> timesteps;  // B*K
  std::vector<char> mask;      // B*K, 1 = real data

  int n_o() const { return static_cast<int>(obs.cols()); }
  int n_a() const { return static_cast<int>(act.cols()); }
  bool valid(int b, int k) const { return mask[static_cast<std::size_t>(b) * K + k] != 0; }
  int n_real() const;
  /// Throws ContractViolation when the fields disagree on B, K or dimensions.
  void validate() const;
  /// Samples [b0, b1) as a new batch.
  Batch slice(int b0, int b1) const;
};

Batch make_batch(const std::vector<const data::ContextWindow*>& windows);
Batch make_batch(const std::vector<data::ContextWindow>& windows);

}  // namespace dtc::model
