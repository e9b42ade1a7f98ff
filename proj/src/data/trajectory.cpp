#include "dtc/data/trajectory.hpp"

namespace dtc::data {

void Trajectory::validate() const {
  const auto n = rew.size();
  if (obs.rows() != n || act.rows() != n)
    throw ValidationError("trajectory '" + task_id + "': obs/act/rew lengths differ (" +
                          std::to_string(obs.rows()) + ", " + std::to_string(act.rows()) + ", " +
                          std::to_string(n) + ")");
  if (!obs.allFinite() || !act.allFinite() || !rew.allFinite())
    throw ValidationError("trajectory '" + task_id + "': non-finite entry");
}

}  // namespace dtc::data
