#include "sgil/shield.hpp"

#include <stdexcept>

namespace sgil::shield {

FilterResult filtered_action(const reach::ValueFunction& vf,
                             const models::State& x, double u_policy,
                             const FilterConfig& cfg, bool was_engaged) {
  if (!(cfg.threshold >= 0.0))
    throw std::invalid_argument("filter threshold must be >= 0");
  if (!(cfg.hysteresis >= 0.0))
    throw std::invalid_argument("filter hysteresis must be >= 0");

  const double slice = cfg.dbar < 0.0 ? vf.dbar_max() : cfg.dbar;
  bool clamped = false;
  const double v = reach::query_value(vf, x, slice, &clamped);

  FilterResult r;
  if (clamped) {
    r.u = reach::query_safe_control(vf, x);
    r.engaged = true;
    r.flagged = true;
    return r;
  }
  const double gate =
      was_engaged ? cfg.threshold + cfg.hysteresis : cfg.threshold;
  if (v <= gate) {
    r.u = reach::query_safe_control(vf, x);
    r.engaged = true;
  } else {
    r.u = u_policy;
  }
  return r;
}

}  // namespace sgil::shield
