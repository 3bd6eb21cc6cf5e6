#pragma once

#include "sgil/models.hpp"
#include "sgil/reach.hpp"

namespace sgil::shield {

// Least-restrictive filter: the wrapped policy runs untouched until the
// value on the filtering slice drops to the threshold, then the
// reachability controller takes over.
struct FilterConfig {
  double threshold = 0.05;
  double dbar = -1.0;      // filtering slice; negative picks the top slice
  double hysteresis = 0.0; // raises the release gate while engaged
};

struct FilterResult {
  double u = 0.0;
  bool engaged = false;
  bool flagged = false; // state left the grid and was clamped
};

// `was_engaged` feeds the hysteresis band; callers that keep no engagement
// state leave it false and get the memoryless threshold rule.
FilterResult filtered_action(const reach::ValueFunction& vf,
                             const models::State& x, double u_policy,
                             const FilterConfig& cfg, bool was_engaged = false);

}  // namespace sgil::shield
