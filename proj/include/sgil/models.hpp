#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "sgil/grid.hpp"
#include "sgil/rng.hpp"

namespace sgil::models {

using State = Eigen::VectorXd;

// x = (p_x, p_y, theta), theta_dot = u + d
struct UnicycleModel {
  double v = 1.0;
  double omega_max = 1.0;
};

// x = (p_x, p_y, theta), p_x grows with sin(theta); u + d is a steering
// angle, clipped to the physical stop before tan.
struct TaxiModel {
  double v = 5.0;
  double h = 5.0;
  double omega_max = 1.0;
};

// x_dot = u + d on the line; the analytic sanity case.
struct Int1dModel {
  double ubar = 1.0;
};

using Model = std::variant<Int1dModel, UnicycleModel, TaxiModel>;

int state_dim(const Model& m);
double control_bound(const Model& m);
// index of the periodic heading coordinate, or -1
int heading_axis(const Model& m);

// Scalar flow kernels. The solver and the MPC expert inline these directly;
// the public flow()/hamiltonian() wrap the same arithmetic so cross-checks
// compare identical expressions.
inline void unicycle_flow(const UnicycleModel& m, double cth, double sth,
                          double w, double out[3]) {
  out[0] = m.v * cth;
  out[1] = m.v * sth;
  out[2] = w;
}

inline void taxi_flow(const TaxiModel& m, double cth, double sth, double w,
                      double out[3]) {
  out[0] = m.v * sth;
  out[1] = m.v * cth;
  out[2] = (m.v / m.h) * std::tan(std::clamp(w, -m.omega_max, m.omega_max));
}

inline double unicycle_hamiltonian(const UnicycleModel& m, double cth,
                                   double sth, double p1, double p2, double p3,
                                   double dbar) {
  return p1 * m.v * cth + p2 * m.v * sth + (m.omega_max - dbar) * std::abs(p3);
}

inline double taxi_hamiltonian(const TaxiModel& m, double cth, double sth,
                               double p1, double p2, double p3, double dbar) {
  return p1 * m.v * sth + p2 * m.v * cth +
         (m.v / m.h) * std::tan(m.omega_max - dbar) * std::abs(p3);
}

inline double int1d_hamiltonian(const Int1dModel& m, double p, double dbar) {
  return (m.ubar - dbar) * std::abs(p);
}

Eigen::VectorXd flow(const Model& m, const State& x, double u, double d);

// Classical RK4 with u, d held constant, substepped so no single stage
// exceeds h_max; heading wrapped to [-pi, pi) afterwards. dt = 0 is a no-op.
State step_rk4(const Model& m, const State& x, double u, double d, double dt,
               double h_max = 0.05);

double hamiltonian(const Model& m, const State& x,
                   Eigen::Ref<const Eigen::VectorXd> p, double dbar);
double optimal_control(const Model& m, const State& x,
                       Eigen::Ref<const Eigen::VectorXd> p);
double optimal_disturbance(const Model& m, const State& x,
                           Eigen::Ref<const Eigen::VectorXd> p, double dbar);
// per-axis max |dH/dp_i|, the Lax-Friedrichs dissipation coefficients
Eigen::VectorXd dissipation_bounds(const Model& m, double dbar);

struct Circle {
  double cx = 0.0, cy = 0.0, r = 1.0;
};

struct MpcConfig {
  int horizon = 20;
  double dt = 0.1;
  double w_goal = 1.0;
  double w_obs = 100.0;
  double w_u = 0.1;
  double margin = 0.2;
  int population = 64;
  int elites = 8;
  int iterations = 3;
  double init_std = 0.5;  // of omega_max
};

struct PidConfig {
  double k_cte = 0.08;
  double k_he = 1.2;
  double heading_cap = 0.5;
};

struct EnvGeometry {
  // unicycle workspace and obstacles
  Eigen::Vector2d ws_lo{-5.0, -5.0};
  Eigen::Vector2d ws_hi{5.0, 5.0};
  std::vector<Circle> obstacles;
  Eigen::Vector2d goal_center{3.5, 3.5};
  double goal_radius = 0.5;
  Eigen::Vector2d start_lo{-4.5, -4.5};
  Eigen::Vector2d start_hi{-3.0, -3.0};
  double theta_spread = M_PI / 4;

  // taxi runway
  double runway_halfwidth = 10.0;
  double end_py = 200.0;
  double taxi_px_lo = -6.0, taxi_px_hi = 6.0;
  double taxi_th_lo = -0.3, taxi_th_hi = 0.3;

  // 1d line; failure at x <= 0 and, when fail_hi is finite, at x >= fail_hi
  double line_lo = 0.0, line_hi = 4.0;
  double line_goal = 3.9;
  double line_start_lo = 0.5, line_start_hi = 3.5;
  double line_fail_hi = std::numeric_limits<double>::infinity();
};

struct Environment {
  std::string name;  // unicycle | taxi | int1d
  Model model;
  EnvGeometry geom;
  double dbar_max = 0.0;
  double control_dt = 0.1;
  double integrator_dt = 0.05;
  double timeout = 15.0;
  std::vector<grid::Axis> axes;
  std::vector<double> dbar_levels;
  MpcConfig mpc;
  PidConfig pid;
  std::uint64_t hash = 0;       // digest of the canonical config text
  std::string canonical_json;   // the hashed bytes, kept for metadata
};

Environment env_from_json_text(const std::string& text);
Environment load_environment(const std::string& path);

// Signed distance to the failure set boundary: positive outside L.
double target_function(const Environment& env, const State& x);
bool at_goal(const Environment& env, const State& x);
// Uniform draw from the start distribution, rejection-sampled out of L.
State sample_start(const Environment& env, Rng& rng);

grid::GridPtr make_grid(const Environment& env);

}  // namespace sgil::models
