#include "sgil/experts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgil::experts {

using models::Environment;
using models::State;

namespace {

// distance-to-failure for a bare position/heading triple, allocation-free
double target_at(const Environment& env, const double s[3], State& scratch) {
  scratch[0] = s[0];
  scratch[1] = s[1];
  scratch[2] = s[2];
  return models::target_function(env, scratch);
}

// RK4 with the unicycle flow on plain arrays; mirrors step_rk4 substepping
void advance_unicycle(const models::UnicycleModel& m, double s[3], double u,
                      double dt, double h_max) {
  const int n = std::max(1, static_cast<int>(std::ceil(dt / h_max - 1e-12)));
  const double h = dt / n;
  const double w = std::clamp(u, -2.0 * m.omega_max, 2.0 * m.omega_max);
  for (int k = 0; k < n; ++k) {
    double k1[3], k2[3], k3[3], k4[3], t[3];
    models::unicycle_flow(m, std::cos(s[2]), std::sin(s[2]), w, k1);
    for (int i = 0; i < 3; ++i) t[i] = s[i] + 0.5 * h * k1[i];
    models::unicycle_flow(m, std::cos(t[2]), std::sin(t[2]), w, k2);
    for (int i = 0; i < 3; ++i) t[i] = s[i] + 0.5 * h * k2[i];
    models::unicycle_flow(m, std::cos(t[2]), std::sin(t[2]), w, k3);
    for (int i = 0; i < 3; ++i) t[i] = s[i] + h * k3[i];
    models::unicycle_flow(m, std::cos(t[2]), std::sin(t[2]), w, k4);
    for (int i = 0; i < 3; ++i)
      s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  s[2] = std::remainder(s[2], 2.0 * M_PI);
  if (s[2] >= M_PI) s[2] -= 2.0 * M_PI;
}

struct PlanScore {
  double cost = 0.0;
  double min_l = 0.0;
};

PlanScore score_plan(const Environment& env, const models::UnicycleModel& m,
                     const State& x0, const Eigen::VectorXd& us,
                     const models::MpcConfig& cfg, State& scratch) {
  double s[3] = {x0[0], x0[1], x0[2]};
  PlanScore ps;
  ps.min_l = target_at(env, s, scratch);
  const double gx = env.geom.goal_center[0], gy = env.geom.goal_center[1];
  for (int t = 0; t < us.size(); ++t) {
    advance_unicycle(m, s, us[t], cfg.dt, env.integrator_dt);
    const double l = target_at(env, s, scratch);
    ps.min_l = std::min(ps.min_l, l);
    const double dgx = s[0] - gx, dgy = s[1] - gy;
    const double pen = std::max(0.0, cfg.margin - l);
    ps.cost += cfg.w_goal * (dgx * dgx + dgy * dgy) + cfg.w_obs * pen * pen +
               cfg.w_u * us[t] * us[t];
  }
  return ps;
}

}  // namespace

double mpc_cost(const Environment& env, const std::vector<State>& xs,
                const Eigen::VectorXd& us, const models::MpcConfig& cfg) {
  if (static_cast<int>(xs.size()) != us.size() + 1)
    throw std::invalid_argument("state sequence must be one longer than controls");
  const double gx = env.geom.goal_center[0], gy = env.geom.goal_center[1];
  double cost = 0.0;
  for (int t = 0; t < us.size(); ++t) {
    const State& x = xs[t + 1];
    const double l = models::target_function(env, x);
    const double dgx = x[0] - gx, dgy = x[1] - gy;
    const double pen = std::max(0.0, cfg.margin - l);
    cost += cfg.w_goal * (dgx * dgx + dgy * dgy) + cfg.w_obs * pen * pen +
            cfg.w_u * us[t] * us[t];
  }
  return cost;
}

MpcResult mpc_expert(const Environment& env, const State& x,
                     const models::MpcConfig& cfg, Rng& rng) {
  const auto* uni = std::get_if<models::UnicycleModel>(&env.model);
  if (!uni) throw std::invalid_argument("mpc expert drives the unicycle only");
  const double bound = uni->omega_max;
  const int H = cfg.horizon, pop = cfg.population, elites = cfg.elites;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd stddev =
      Eigen::VectorXd::Constant(H, cfg.init_std * bound);
  Eigen::MatrixXd samples(H, pop);
  std::vector<std::pair<double, int>> ranked(pop);
  State scratch(3);
  bool all_colliding = false;

  // AR(1)-correlated exploration so coherent multi-step maneuvers show up in
  // the population; antithetic pairs cancel sampling noise in the elite mean
  // when the cost is symmetric
  constexpr double kBeta = 0.7;
  const double kFresh = std::sqrt(1.0 - kBeta * kBeta);
  for (int it = 0; it < cfg.iterations; ++it) {
    const int half = pop / 2;
    for (int j = 0; j < half; ++j) {
      double z = rng.normal();
      for (int t = 0; t < H; ++t) {
        if (t) z = kBeta * z + kFresh * rng.normal();
        const double dz = stddev[t] * z;
        samples(t, j) = std::clamp(mean[t] + dz, -bound, bound);
        samples(t, j + half) = std::clamp(mean[t] - dz, -bound, bound);
      }
    }
    if (pop % 2) {
      double z = rng.normal();
      for (int t = 0; t < H; ++t) {
        if (t) z = kBeta * z + kFresh * rng.normal();
        samples(t, pop - 1) = std::clamp(mean[t] + stddev[t] * z, -bound, bound);
      }
    }
    all_colliding = true;
    for (int j = 0; j < pop; ++j) {
      const PlanScore ps = score_plan(env, *uni, x, samples.col(j), cfg, scratch);
      ranked[j] = {ps.cost, j};
      if (ps.min_l > 0.0) all_colliding = false;
    }
    std::partial_sort(ranked.begin(), ranked.begin() + elites, ranked.end());
    Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(H);
    for (int e = 0; e < elites; ++e) new_mean += samples.col(ranked[e].second);
    new_mean /= elites;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(H);
    for (int e = 0; e < elites; ++e) {
      const Eigen::VectorXd d = samples.col(ranked[e].second) - new_mean;
      var += d.cwiseProduct(d);
    }
    mean = new_mean;
    stddev = (var / elites).cwiseSqrt().cwiseMax(1e-3);
  }

  MpcResult r;
  r.plan = mean.cwiseMax(-bound).cwiseMin(bound);
  r.u = r.plan[0];
  r.all_colliding = all_colliding;
  return r;
}

double pid_expert(const models::TaxiModel& m, const State& x,
                  const models::PidConfig& cfg) {
  const double theta_des =
      -std::clamp(cfg.k_cte * x[0], -cfg.heading_cap, cfg.heading_cap);
  return std::clamp(-cfg.k_he * (x[2] - theta_des), -m.omega_max, m.omega_max);
}

double expert_action(const Environment& env, const State& x, Rng& rng) {
  if (std::holds_alternative<models::UnicycleModel>(env.model))
    return mpc_expert(env, x, env.mpc, rng).u;
  if (const auto* taxi = std::get_if<models::TaxiModel>(&env.model))
    return pid_expert(*taxi, x, env.pid);
  const auto& line = std::get<models::Int1dModel>(env.model);
  return std::clamp(2.0 * (env.geom.line_goal - x[0]), -line.ubar, line.ubar);
}

}  // namespace sgil::experts
