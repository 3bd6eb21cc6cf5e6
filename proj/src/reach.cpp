#include "sgil/reach.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgil::reach {

using grid::Field;
using grid::Grid;
using models::Model;
using models::State;

namespace {

// One Euler stage of the Lax-Friedrichs update on a 3D grid,
//   stage(w) = min(l, w + dtau * (H(x, pbar) + sum_k alpha_k (p+_k - p-_k)/2))
// with H = a0(theta) pbar0 + a1(theta) pbar1 + w3 |pbar2|, which covers both
// vehicle models. Axis 2 is the fastest-varying (theta) axis. alpha2 is the
// dissipation bound for that axis, which may exceed w3: all disturbance
// levels share one alpha so the discrete comparison principle orders the
// slices. When kFinal, out holds the previous field and receives
// min(prev, l, (prev + stage(w))/2); the extra min against prev pins down
// pointwise non-increase at the non-periodic edges, where the collapsed
// one-sided stencil carries no dissipation.
struct StepStats {
  double delta = 0.0;  // max |V_new - V_old|
  double rise = 0.0;   // max (V_new - V_old)
};

template <bool kFinal>
StepStats lf_stage_3d(int n0, int n1, int n2, bool per2, double inv0,
                      double inv1, double inv2, const double* __restrict a0t,
                      const double* __restrict a1t, double alpha01, double w3,
                      double alpha2, double dtau, const double* __restrict w,
                      const double* __restrict l, double* __restrict out) {
  const std::int64_t s0 = static_cast<std::int64_t>(n1) * n2;
  const std::int64_t s1 = n2;
  StepStats st;
  for (int i0 = 0; i0 < n0; ++i0) {
    const std::int64_t o0m = i0 > 0 ? -s0 : s0;
    const double f0m = i0 > 0 ? 1.0 : -1.0;
    const std::int64_t o0p = i0 < n0 - 1 ? s0 : -s0;
    const double f0p = i0 < n0 - 1 ? 1.0 : -1.0;
    for (int i1 = 0; i1 < n1; ++i1) {
      const std::int64_t o1m = i1 > 0 ? -s1 : s1;
      const double f1m = i1 > 0 ? 1.0 : -1.0;
      const std::int64_t o1p = i1 < n1 - 1 ? s1 : -s1;
      const double f1p = i1 < n1 - 1 ? 1.0 : -1.0;
      const std::int64_t base = i0 * s0 + i1 * s1;

      auto update = [&](std::int64_t c, int i2, std::int64_t o2m, double f2m,
                        std::int64_t o2p, double f2p) {
        const double p0m = f0m * (w[c] - w[c + o0m]) * inv0;
        const double p0p = f0p * (w[c + o0p] - w[c]) * inv0;
        const double p1m = f1m * (w[c] - w[c + o1m]) * inv1;
        const double p1p = f1p * (w[c + o1p] - w[c]) * inv1;
        const double p2m = f2m * (w[c] - w[c + o2m]) * inv2;
        const double p2p = f2p * (w[c + o2p] - w[c]) * inv2;
        const double ham = a0t[i2] * 0.5 * (p0m + p0p) +
                           a1t[i2] * 0.5 * (p1m + p1p) +
                           w3 * std::abs(0.5 * (p2m + p2p));
        const double diss = 0.5 * (alpha01 * ((p0p - p0m) + (p1p - p1m)) +
                                   alpha2 * (p2p - p2m));
        const double s = std::min(l[c], w[c] + dtau * (ham + diss));
        if constexpr (kFinal) {
          const double prev = out[c];
          const double v =
              std::min(prev, std::min(l[c], 0.5 * prev + 0.5 * s));
          out[c] = v;
          st.delta = std::max(st.delta, std::abs(v - prev));
          st.rise = std::max(st.rise, v - prev);
        } else {
          out[c] = s;
        }
      };

      // theta boundaries: periodic wrap or one-sided ghost
      if (per2) {
        update(base, 0, n2 - 1, 1.0, 1, 1.0);
      } else {
        update(base, 0, 1, -1.0, 1, 1.0);
      }
      for (int i2 = 1; i2 < n2 - 1; ++i2)
        update(base + i2, i2, -1, 1.0, 1, 1.0);
      if (per2) {
        update(base + n2 - 1, n2 - 1, -1, 1.0, -(n2 - 1), 1.0);
      } else {
        update(base + n2 - 1, n2 - 1, -1, 1.0, -1, -1.0);
      }
    }
  }
  return st;
}

// Fallback for other dimensionalities; hot enough only for tiny grids.
template <bool kFinal>
StepStats lf_stage_generic(const Grid& g, const Model& m, double dbar,
                           const Eigen::VectorXd& alpha, double dtau,
                           const Eigen::ArrayXd& w, const Eigen::ArrayXd& l,
                           Eigen::ArrayXd& out) {
  const int d = g.dim();
  Field fw(std::shared_ptr<const Grid>(&g, [](const Grid*) {}), w);
  int midx[grid::kMaxDim] = {0};
  State x(d);
  StepStats st;
  for (std::int64_t c = 0; c < g.size(); ++c) {
    const auto [pl, pr] = upwind_derivatives(fw, midx);
    for (int a = 0; a < d; ++a) x[a] = g.axis(a).node(midx[a]);
    const Eigen::VectorXd pbar = 0.5 * (pl + pr);
    const double ham = models::hamiltonian(m, x, pbar, dbar);
    const double diss = 0.5 * alpha.dot(pr - pl);
    const double s = std::min(l[c], w[c] + dtau * (ham + diss));
    if constexpr (kFinal) {
      const double prev = out[c];
      const double v = std::min(prev, std::min(l[c], 0.5 * prev + 0.5 * s));
      out[c] = v;
      st.delta = std::max(st.delta, std::abs(v - prev));
      st.rise = std::max(st.rise, v - prev);
    } else {
      out[c] = s;
    }
    for (int a = d - 1; a >= 0; --a) {
      if (++midx[a] < g.axis(a).n) break;
      midx[a] = 0;
    }
  }
  return st;
}

bool fast3d_applicable(const Grid& g, const Model& m) {
  return g.dim() == 3 && !g.axis(0).periodic && !g.axis(1).periodic &&
         (std::holds_alternative<models::UnicycleModel>(m) ||
          std::holds_alternative<models::TaxiModel>(m));
}

void validate_params(const SolverParams& p, const Model& m) {
  if (!(p.cfl > 0.0) || p.cfl > 1.0)
    throw std::invalid_argument("cfl must lie in (0, 1]");
  if (!(p.convergence_tol > 0.0) || !(p.max_horizon > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  if (p.dbar_levels.empty())
    throw std::invalid_argument("at least one disturbance level required");
  const bool capped = !std::holds_alternative<models::Int1dModel>(m);
  for (std::size_t i = 0; i < p.dbar_levels.size(); ++i) {
    const double lv = p.dbar_levels[i];
    if (!(lv >= 0.0) || (capped && lv > models::control_bound(m)))
      throw std::invalid_argument("disturbance level out of range");
    if (i > 0 && lv <= p.dbar_levels[i - 1])
      throw std::invalid_argument("disturbance levels must ascend");
  }
}

}  // namespace

Field target_field(const models::Environment& env, grid::GridPtr g) {
  Field f(g);
  const int d = g->dim();
  int midx[grid::kMaxDim] = {0};
  State x(d);
  for (std::int64_t c = 0; c < g->size(); ++c) {
    for (int a = 0; a < d; ++a) x[a] = g->axis(a).node(midx[a]);
    f.values[c] = models::target_function(env, x);
    for (int a = d - 1; a >= 0; --a) {
      if (++midx[a] < g->axis(a).n) break;
      midx[a] = 0;
    }
  }
  return f;
}

ValueFunction solve_hji(grid::GridPtr g, const Model& m,
                        const models::Environment& env,
                        const SolverParams& params) {
  SolverParams p = params;
  if (p.dbar_levels.empty()) p.dbar_levels = env.dbar_levels;
  validate_params(p, m);
  if (g->dim() != models::state_dim(m))
    throw std::invalid_argument("grid/model dimension mismatch");

  ValueFunction vf;
  vf.grid = g;
  vf.dbar_levels = p.dbar_levels;
  vf.model = m;
  vf.model_name = env.name;
  vf.env_hash = env.hash;
  vf.params = p;

  const Field l = target_field(env, g);
  const bool fast = !p.force_generic_kernel && fast3d_applicable(*g, m);

  // theta coefficient tables for the fused kernel
  Eigen::ArrayXd a0t, a1t;
  if (fast) {
    const int n2 = g->axis(2).n;
    a0t.resize(n2);
    a1t.resize(n2);
    for (int i = 0; i < n2; ++i) {
      const double th = g->axis(2).node(i);
      if (const auto* uni = std::get_if<models::UnicycleModel>(&m)) {
        a0t[i] = uni->v * std::cos(th);
        a1t[i] = uni->v * std::sin(th);
      } else {
        const auto& taxi = std::get<models::TaxiModel>(m);
        a0t[i] = taxi.v * std::sin(th);
        a1t[i] = taxi.v * std::cos(th);
      }
    }
  }

  // one dissipation bound for the whole conditioned family (the dummy-state
  // view of the d-bar axis), so every slice advances with the same dtau
  Eigen::VectorXd alpha = models::dissipation_bounds(m, p.dbar_levels.front());
  for (double dbar : p.dbar_levels)
    alpha = alpha.cwiseMax(models::dissipation_bounds(m, dbar));
  double rate_sum = 0.0;
  for (int a = 0; a < g->dim(); ++a)
    rate_sum += alpha[a] / g->axis(a).spacing();
  const double dtau_cfl = rate_sum > 1e-12 ? p.cfl / rate_sum : p.max_horizon;

  Eigen::ArrayXd stage(g->size());
  for (double dbar : p.dbar_levels) {
    const double w3 = models::dissipation_bounds(m, dbar)[g->dim() - 1];
    Field v(g, l.values);
    SliceReport rep;
    rep.dbar = dbar;
    double tau = 0.0;
    while (tau < p.max_horizon - 1e-12) {
      const double dtau = std::min(dtau_cfl, p.max_horizon - tau);
      StepStats st;
      if (fast) {
        const int n0 = g->axis(0).n, n1 = g->axis(1).n, n2 = g->axis(2).n;
        const bool per2 = g->axis(2).periodic;
        const double i0 = 1.0 / g->axis(0).spacing();
        const double i1 = 1.0 / g->axis(1).spacing();
        const double i2 = 1.0 / g->axis(2).spacing();
        lf_stage_3d<false>(n0, n1, n2, per2, i0, i1, i2, a0t.data(),
                           a1t.data(), alpha[0], w3, alpha[2], dtau,
                           v.values.data(), l.values.data(), stage.data());
        st = lf_stage_3d<true>(n0, n1, n2, per2, i0, i1, i2, a0t.data(),
                               a1t.data(), alpha[0], w3, alpha[2], dtau,
                               stage.data(), l.values.data(), v.values.data());
      } else {
        lf_stage_generic<false>(*g, m, dbar, alpha, dtau, v.values, l.values,
                                stage);
        st = lf_stage_generic<true>(*g, m, dbar, alpha, dtau, stage, l.values,
                                    v.values);
      }
      tau += dtau;
      ++rep.steps;
      rep.max_rise = std::max(rep.max_rise, st.rise);
      if (st.delta / dtau < p.convergence_tol) {
        rep.converged = true;
        break;
      }
    }
    rep.horizon = tau;
    if (!v.values.allFinite())
      throw std::runtime_error("value function diverged");
    vf.slices.push_back(std::move(v));
    vf.reports.push_back(rep);
  }

  // the shared alpha keeps slice ordering intact away from the grid edges;
  // project the residual edge noise so V(x; d1) >= V(x; d2) holds exactly
  for (std::size_t k = 1; k < vf.slices.size(); ++k) {
    Eigen::ArrayXd& cur = vf.slices[k].values;
    const Eigen::ArrayXd& lower = vf.slices[k - 1].values;
    vf.reports[k].dbar_projection =
        std::max(0.0, (cur - lower).maxCoeff());
    cur = cur.min(lower);
  }
  return vf;
}

namespace {

struct LevelBracket {
  int k0 = 0, k1 = 0;
  double t = 0.0;
  bool clamped = false;
};

LevelBracket bracket(const std::vector<double>& levels, double dbar) {
  LevelBracket b;
  if (dbar <= levels.front()) {
    b.k0 = b.k1 = 0;
    b.clamped = dbar < levels.front();
    return b;
  }
  if (dbar >= levels.back()) {
    b.k0 = b.k1 = static_cast<int>(levels.size()) - 1;
    b.clamped = dbar > levels.back();
    return b;
  }
  const auto it = std::upper_bound(levels.begin(), levels.end(), dbar);
  b.k1 = static_cast<int>(it - levels.begin());
  b.k0 = b.k1 - 1;
  b.t = (dbar - levels[b.k0]) / (levels[b.k1] - levels[b.k0]);
  return b;
}

}  // namespace

double query_value(const ValueFunction& vf, const State& x, double dbar,
                   bool* clamped) {
  const LevelBracket b = bracket(vf.dbar_levels, dbar);
  const grid::Interp lo = grid::interpolate_clamped(vf.slices[b.k0], x);
  double value = lo.value;
  bool clamp = lo.clamped || b.clamped;
  if (b.t > 0.0) {
    const grid::Interp hi = grid::interpolate_clamped(vf.slices[b.k1], x);
    value = (1.0 - b.t) * lo.value + b.t * hi.value;
    clamp |= hi.clamped;
  }
  if (clamped) *clamped = clamp;
  return value;
}

Eigen::VectorXd query_gradient(const ValueFunction& vf, const State& x,
                               double dbar, bool* clamped) {
  const LevelBracket b = bracket(vf.dbar_levels, dbar);
  grid::GradientResult lo = grid::gradient_at_clamped(vf.slices[b.k0], x);
  bool clamp = lo.clamped || b.clamped;
  if (b.t > 0.0) {
    const grid::GradientResult hi =
        grid::gradient_at_clamped(vf.slices[b.k1], x);
    lo.grad = (1.0 - b.t) * lo.grad + b.t * hi.grad;
    clamp |= hi.clamped;
  }
  if (clamped) *clamped = clamp;
  return std::move(lo.grad);
}

double query_disturbance(const ValueFunction& vf, const State& x,
                         double dbar) {
  if (dbar == 0.0) return 0.0;
  const Eigen::VectorXd grad = query_gradient(vf, x, dbar);
  return models::optimal_disturbance(vf.model, x, grad,
                                     std::min(dbar, vf.dbar_levels.back()));
}

double query_safe_control(const ValueFunction& vf, const State& x) {
  const grid::GradientResult g = grid::gradient_at_clamped(vf.slices.back(), x);
  return models::optimal_control(vf.model, x, g.grad);
}

bool brt_membership(const ValueFunction& vf, const State& x, double dbar) {
  return query_value(vf, x, dbar) <= 0.0;
}

}  // namespace sgil::reach
