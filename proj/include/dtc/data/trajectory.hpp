#pragma once

#include <string>

#include "dtc/common.hpp"

namespace dtc::data {

/// One episode: row t of `obs`/`act` and entry t of `rew` belong to step t.
struct Trajectory {
  std::string task_id;
  Mat obs;  // (T+1) x n_o
  Mat act;  // (T+1) x n_a
  Vec rew;  // T+1
  /// Set when the environment faulted; the arrays hold the steps completed before it.
  bool faulted = false;
  int fault_step = -1;

  int length() const { return static_cast<int>(rew.size()); }
  double total_return() const { return rew.sum(); }
  /// Throws ValidationError on unequal lengths or non-finite entries.
  void validate() const;
};

}  // namespace dtc::data
