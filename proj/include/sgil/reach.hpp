#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "sgil/grid.hpp"
#include "sgil/models.hpp"

namespace sgil::reach {

struct SolverParams {
  double cfl = 0.5;
  double convergence_tol = 1e-4;  // max-norm change per unit backward time
  double max_horizon = 10.0;
  std::vector<double> dbar_levels;  // ascending; taken from the env if empty
  // bypass the fused 3d kernel; the slow reference path, used to cross-check
  bool force_generic_kernel = false;
};

struct SliceReport {
  double dbar = 0.0;
  bool converged = false;
  double horizon = 0.0;  // backward time actually integrated
  int steps = 0;
  // largest pointwise increase seen across all steps; the scheme only lowers
  // values, so anything above roundoff signals a broken update
  double max_rise = 0.0;
  // how far this slice sat above the previous level before the ordering
  // projection; large values mean the slices stopped being comparable
  double dbar_projection = 0.0;
};

// Converged safety value, one field per disturbance level. Blending across
// levels is linear, so the conditioned function V(x; dbar) is piecewise
// multilinear in (x, dbar).
struct ValueFunction {
  grid::GridPtr grid;
  std::vector<double> dbar_levels;
  std::vector<grid::Field> slices;
  models::Model model;
  std::string model_name;
  std::uint64_t env_hash = 0;
  SolverParams params;
  std::vector<SliceReport> reports;

  bool all_converged() const {
    for (const auto& r : reports)
      if (!r.converged) return false;
    return !reports.empty();
  }
  double dbar_max() const { return dbar_levels.back(); }
};

// Samples the target function at every grid node.
grid::Field target_field(const models::Environment& env, grid::GridPtr g);

// Backward evolution of the variational inequality from V = l with the
// Lax-Friedrichs Hamiltonian and two-stage TVD Runge-Kutta, clamped by l
// after every stage, one independent solve per disturbance level.
ValueFunction solve_hji(grid::GridPtr g, const models::Model& m,
                        const models::Environment& env,
                        const SolverParams& params);

// All queries clamp out-of-range states and disturbance levels to the grid
// and flag it via `clamped` when provided.
double query_value(const ValueFunction& vf, const models::State& x,
                   double dbar, bool* clamped = nullptr);
Eigen::VectorXd query_gradient(const ValueFunction& vf, const models::State& x,
                               double dbar, bool* clamped = nullptr);
double query_disturbance(const ValueFunction& vf, const models::State& x,
                         double dbar);
// control maximizing the Hamiltonian on the most robust (top dbar) slice
double query_safe_control(const ValueFunction& vf, const models::State& x);
bool brt_membership(const ValueFunction& vf, const models::State& x,
                    double dbar);

}  // namespace sgil::reach
