#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dtc/data/anchors.hpp"
#include "dtc/data/trajectory.hpp"
#include "dtc/env/policy.hpp"

namespace dtc::data {

constexpr int kDatasetFormatVersion = 1;

struct CollectStats {
  int collected = 0;
  int discarded = 0;  // episodes dropped after a divergence fault
};

/// `n_traj` complete episodes of `policy` on `task`. Attempt i uses environment
/// seed derive_seed(seed, 2i) and policy seed derive_seed(seed, 2i+1); a
/// diverging attempt is discarded and the next attempt takes its place. Throws
/// DivergenceFault once more than half of the attempts would be discards.
std::vector<Trajectory> rollout_collect(const env::TaskSpec& task, const env::Policy& policy, int n_traj,
                                        std::uint64_t seed, CollectStats* stats = nullptr);

/// Mean total return over `episodes` runs (seeded as in rollout_collect).
/// Faulted episodes count with the return accumulated up to the fault.
double mean_return(const env::TaskSpec& task, const env::Policy& policy, int episodes, std::uint64_t seed);

struct DatasetHeader {
  int format_version = kDatasetFormatVersion;
  std::vector<env::TaskSpec> tasks;
  std::map<std::string, NormalizationAnchors> anchors;
  std::string behavior_policy;
  std::uint64_t seed = 0;

  const env::TaskSpec& task(const std::string& task_id) const;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Trajectory> trajectories;
};

/// Line-delimited JSON: header on line 1, one trajectory per following line.
/// Doubles are printed with 17 significant digits.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
/// Throws ParseError (with the 1-based line) on malformed lines and
/// ValidationError on inconsistent dimensions or unknown task ids.
Dataset read_dataset(const std::filesystem::path& path);

/// Writes a JSON value with every double at 17 significant digits, no whitespace.
void write_json_17(std::ostream& out, const nlohmann::json& j);

}  // namespace dtc::data
