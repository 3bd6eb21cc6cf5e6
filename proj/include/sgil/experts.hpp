#pragma once

#include <Eigen/Core>
#include <vector>

#include "sgil/models.hpp"
#include "sgil/rng.hpp"

namespace sgil::experts {

struct MpcResult {
  double u = 0.0;
  Eigen::VectorXd plan;      // elite-mean control sequence, clipped
  bool all_colliding = false;  // every sampled rollout penetrated an obstacle
};

// sum over rolled-out stages of goal distance^2, hinge obstacle penetration^2
// and control energy; xs holds x_0..x_H, us holds u_0..u_{H-1}
double mpc_cost(const models::Environment& env,
                const std::vector<models::State>& xs, const Eigen::VectorXd& us,
                const models::MpcConfig& cfg);

// cross-entropy search over control sequences in [-omega_max, omega_max]
MpcResult mpc_expert(const models::Environment& env, const models::State& x,
                     const models::MpcConfig& cfg, Rng& rng);

// centerline tracker: theta_des = -clip(k_cte px, cap), u = -k_he (theta - theta_des)
double pid_expert(const models::TaxiModel& m, const models::State& x,
                  const models::PidConfig& cfg);

// task expert for any environment (mpc / pid / proportional line chase)
double expert_action(const models::Environment& env, const models::State& x,
                     Rng& rng);

}  // namespace sgil::experts
