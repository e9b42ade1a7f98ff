#include "dtc/data/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "dtc/common.hpp"

namespace dtc::data {

NormalizationAnchors::NormalizationAnchors(double j_expert, double j_medium)
    : j_expert_(j_expert), j_medium_(j_medium) {
  if (!std::isfinite(j_expert) || !std::isfinite(j_medium))
    throw ValidationError("normalization anchors must be finite");
  if (!(j_expert > j_medium))
    throw ValidationError("normalization anchors: J_expert (" + std::to_string(j_expert) +
                          ") must exceed J_medium (" + std::to_string(j_medium) + ")");
}

double normalize_score(double J, const NormalizationAnchors& a) {
  return (J - a.j_medium()) / (a.j_expert() - a.j_medium());
}

double cap_score(double score, double lo, double hi) {
  require(lo < hi, "cap_score: empty interval");
  return std::clamp(score, lo, hi);
}

nlohmann::json anchors_to_json(const NormalizationAnchors& a) {
  return {{"J_expert", a.j_expert()}, {"J_medium", a.j_medium()}};
}

NormalizationAnchors anchors_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("J_expert") || !j.contains("J_medium") ||
      !j["J_expert"].is_number() || !j["J_medium"].is_number())
    throw ValidationError("anchors need numeric J_expert and J_medium");
  return {j["J_expert"].get<double>(), j["J_medium"].get<double>()};
}

}  // namespace dtc::data
