#pragma once

#include "json.hpp"

namespace dtc::data {

/// Returns of the converged (expert) and early-stopped (medium) demonstrators.
/// The constructor rejects j_expert <= j_medium and non-finite values.
class NormalizationAnchors {
 public:
  NormalizationAnchors(double j_expert, double j_medium);
  double j_expert() const { return j_expert_; }
  double j_medium() const { return j_medium_; }

 private:
  double j_expert_;
  double j_medium_;
};

/// (J - J_medium) / (J_expert - J_medium). Unbounded on both sides.
double normalize_score(double J, const NormalizationAnchors& anchors);

/// Clamps a normalized score into [lo, hi].
double cap_score(double score, double lo, double hi);

nlohmann::json anchors_to_json(const NormalizationAnchors& a);
NormalizationAnchors anchors_from_json(const nlohmann::json& j);

}  // namespace dtc::data
