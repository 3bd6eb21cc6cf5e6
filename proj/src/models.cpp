#include "sgil/models.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sgil::models {

namespace {

using nlohmann::json;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double wrap_pi(double th) {
  return th - 2.0 * M_PI * std::floor((th + M_PI) / (2.0 * M_PI));
}

void require_finite(const State& x, double u, double d) {
  if (!x.allFinite() || !std::isfinite(u) || !std::isfinite(d))
    throw std::invalid_argument("non-finite dynamics input");
}

void check_dbar(double dbar, double bound) {
  if (!(dbar >= 0.0) || dbar > bound)
    throw std::invalid_argument("disturbance bound outside [0, control bound]");
}

}  // namespace

int state_dim(const Model& m) {
  return std::holds_alternative<Int1dModel>(m) ? 1 : 3;
}

double control_bound(const Model& m) {
  return std::visit(
      [](const auto& mm) {
        if constexpr (std::is_same_v<std::decay_t<decltype(mm)>, Int1dModel>)
          return mm.ubar;
        else
          return mm.omega_max;
      },
      m);
}

int heading_axis(const Model& m) {
  return std::holds_alternative<Int1dModel>(m) ? -1 : 2;
}

Eigen::VectorXd flow(const Model& m, const State& x, double u, double d) {
  require_finite(x, u, d);
  if (x.size() != state_dim(m))
    throw std::invalid_argument("state dimension mismatch");
  Eigen::VectorXd out(x.size());
  if (const auto* uni = std::get_if<UnicycleModel>(&m)) {
    // the injected input can exceed omega_max by up to the disturbance
    // bound (itself at most omega_max); cap there so dynamics stay sane
    const double cap = 2.0 * uni->omega_max;
    double buf[3];
    unicycle_flow(*uni, std::cos(x[2]), std::sin(x[2]),
                  std::clamp(u + d, -cap, cap), buf);
    out << buf[0], buf[1], buf[2];
  } else if (const auto* taxi = std::get_if<TaxiModel>(&m)) {
    double buf[3];
    taxi_flow(*taxi, std::cos(x[2]), std::sin(x[2]), u + d, buf);
    out << buf[0], buf[1], buf[2];
  } else {
    out[0] = u + d;
  }
  return out;
}

State step_rk4(const Model& m, const State& x, double u, double d, double dt,
               double h_max) {
  if (dt < 0.0 || h_max <= 0.0) throw std::invalid_argument("bad step sizes");
  State y = x;
  if (dt == 0.0) return y;
  const int n = static_cast<int>(std::ceil(dt / h_max - 1e-12));
  const double h = dt / n;
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd k1 = flow(m, y, u, d);
    const Eigen::VectorXd k2 = flow(m, y + 0.5 * h * k1, u, d);
    const Eigen::VectorXd k3 = flow(m, y + 0.5 * h * k2, u, d);
    const Eigen::VectorXd k4 = flow(m, y + h * k3, u, d);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  const int ha = heading_axis(m);
  if (ha >= 0) y[ha] = wrap_pi(y[ha]);
  return y;
}

double hamiltonian(const Model& m, const State& x,
                   Eigen::Ref<const Eigen::VectorXd> p, double dbar) {
  if (const auto* uni = std::get_if<UnicycleModel>(&m)) {
    check_dbar(dbar, uni->omega_max);
    return unicycle_hamiltonian(*uni, std::cos(x[2]), std::sin(x[2]), p[0],
                                p[1], p[2], dbar);
  }
  if (const auto* taxi = std::get_if<TaxiModel>(&m)) {
    check_dbar(dbar, taxi->omega_max);
    return taxi_hamiltonian(*taxi, std::cos(x[2]), std::sin(x[2]), p[0], p[1],
                            p[2], dbar);
  }
  // the adversary may dominate here (drift case), so only d >= 0 is required
  if (!(dbar >= 0.0)) throw std::invalid_argument("negative disturbance bound");
  return int1d_hamiltonian(std::get<Int1dModel>(m), p[0], dbar);
}

double optimal_control(const Model& m, const State&,
                       Eigen::Ref<const Eigen::VectorXd> p) {
  const int a = std::holds_alternative<Int1dModel>(m) ? 0 : 2;
  return control_bound(m) * sgn(p[a]);
}

double optimal_disturbance(const Model& m, const State&,
                           Eigen::Ref<const Eigen::VectorXd> p, double dbar) {
  if (!(dbar >= 0.0)) throw std::invalid_argument("negative disturbance bound");
  const int a = std::holds_alternative<Int1dModel>(m) ? 0 : 2;
  return -dbar * sgn(p[a]);
}

Eigen::VectorXd dissipation_bounds(const Model& m, double dbar) {
  if (const auto* uni = std::get_if<UnicycleModel>(&m)) {
    check_dbar(dbar, uni->omega_max);
    Eigen::Vector3d a(uni->v, uni->v, uni->omega_max - dbar);
    return a;
  }
  if (const auto* taxi = std::get_if<TaxiModel>(&m)) {
    check_dbar(dbar, taxi->omega_max);
    Eigen::Vector3d a(taxi->v, taxi->v,
                      (taxi->v / taxi->h) * std::tan(taxi->omega_max - dbar));
    return a;
  }
  Eigen::VectorXd a(1);
  a[0] = std::abs(std::get<Int1dModel>(m).ubar - dbar);
  return a;
}

namespace {

std::vector<grid::Axis> parse_axes(const json& j) {
  std::vector<grid::Axis> axes;
  for (const auto& a : j.at("grid")) {
    grid::Axis ax;
    ax.lo = a.at("lo").get<double>();
    ax.hi = a.at("hi").get<double>();
    ax.n = a.at("n").get<int>();
    ax.periodic = a.value("periodic", false);
    axes.push_back(ax);
  }
  return axes;
}

void parse_common(const json& j, Environment& env) {
  env.dbar_max = j.at("dbar_max").get<double>();
  env.control_dt = j.value("control_dt", 0.1);
  env.integrator_dt = j.value("integrator_dt", 0.05);
  env.axes = parse_axes(j);
  env.dbar_levels = j.at("dbar_levels").get<std::vector<double>>();
  if (env.dbar_levels.empty())
    throw std::invalid_argument("dbar_levels must be non-empty");
  for (std::size_t i = 0; i < env.dbar_levels.size(); ++i) {
    const double lv = env.dbar_levels[i];
    if (!(lv >= 0.0) || lv > control_bound(env.model))
      throw std::invalid_argument("dbar level outside [0, control bound]");
    if (i > 0 && lv <= env.dbar_levels[i - 1])
      throw std::invalid_argument("dbar levels must ascend");
  }
  if (env.dbar_max < 0.0 || env.dbar_max > control_bound(env.model))
    throw std::invalid_argument("dbar_max outside [0, control bound]");
  if (env.control_dt <= 0.0 || env.integrator_dt <= 0.0 || env.timeout <= 0.0)
    throw std::invalid_argument("time parameters must be positive");
}

Eigen::Vector2d vec2_of(const json& a) {
  return {a.at(0).get<double>(), a.at(1).get<double>()};
}

}  // namespace

Environment env_from_json_text(const std::string& text) {
  json j = json::parse(text);
  Environment env;
  env.name = j.at("model").get<std::string>();
  if (env.name == "unicycle") {
    UnicycleModel m;
    m.v = j.value("v", 1.0);
    m.omega_max = j.value("omega_max", 1.0);
    if (m.v <= 0.0 || m.omega_max <= 0.0)
      throw std::invalid_argument("unicycle parameters must be positive");
    env.model = m;
    env.timeout = j.value("timeout", 15.0);
    auto& g = env.geom;
    if (j.contains("workspace")) {
      g.ws_lo = vec2_of(j["workspace"].at("lo"));
      g.ws_hi = vec2_of(j["workspace"].at("hi"));
    }
    g.obstacles.clear();
    for (const auto& o : j.value("obstacles", json::array())) {
      Circle c;
      const auto ctr = vec2_of(o.at("center"));
      c.cx = ctr[0];
      c.cy = ctr[1];
      c.r = o.at("radius").get<double>();
      if (c.r <= 0.0) throw std::invalid_argument("obstacle radius <= 0");
      g.obstacles.push_back(c);
    }
    if (j.contains("goal")) {
      g.goal_center = vec2_of(j["goal"].at("center"));
      g.goal_radius = j["goal"].at("radius").get<double>();
    }
    if (j.contains("start")) {
      g.start_lo = vec2_of(j["start"].at("lo"));
      g.start_hi = vec2_of(j["start"].at("hi"));
      g.theta_spread = j["start"].value("theta_spread", M_PI / 4);
    }
    if (j.contains("expert")) {
      const auto& e = j["expert"];
      env.mpc.horizon = e.value("horizon", 20);
      env.mpc.dt = e.value("dt", 0.1);
      env.mpc.w_goal = e.value("w_goal", 1.0);
      env.mpc.w_obs = e.value("w_obs", 100.0);
      env.mpc.w_u = e.value("w_u", 0.1);
      env.mpc.margin = e.value("margin", 0.2);
      env.mpc.population = e.value("population", 64);
      env.mpc.elites = e.value("elites", 8);
      env.mpc.iterations = e.value("iterations", 3);
      env.mpc.init_std = e.value("init_std", 0.5);
    }
    parse_common(j, env);

    State probe(3);
    probe << g.goal_center[0], g.goal_center[1], 0.0;
    if (target_function(env, probe) <= g.goal_radius)
      throw std::invalid_argument("goal disk intersects the failure set");
    for (int ix = 0; ix <= 4; ++ix)
      for (int iy = 0; iy <= 4; ++iy) {
        probe[0] = g.start_lo[0] + (g.start_hi[0] - g.start_lo[0]) * ix / 4.0;
        probe[1] = g.start_lo[1] + (g.start_hi[1] - g.start_lo[1]) * iy / 4.0;
        if (target_function(env, probe) <= 0.0)
          throw std::invalid_argument("start region touches the failure set");
      }
  } else if (env.name == "taxi") {
    TaxiModel m;
    m.v = j.value("v", 5.0);
    m.h = j.value("h", 5.0);
    m.omega_max = j.value("omega_max", 1.0);
    if (m.v <= 0.0 || m.h <= 0.0 || m.omega_max <= 0.0)
      throw std::invalid_argument("taxi parameters must be positive");
    if (m.omega_max >= M_PI / 2)
      throw std::invalid_argument("steering bound must stay below pi/2");
    env.model = m;
    env.timeout = j.value("timeout", 60.0);
    auto& g = env.geom;
    g.runway_halfwidth = j.value("runway_halfwidth", 10.0);
    g.end_py = j.value("end_py", 200.0);
    if (j.contains("start")) {
      g.taxi_px_lo = j["start"].at("px").at(0).get<double>();
      g.taxi_px_hi = j["start"].at("px").at(1).get<double>();
      g.taxi_th_lo = j["start"].at("theta").at(0).get<double>();
      g.taxi_th_hi = j["start"].at("theta").at(1).get<double>();
    }
    if (std::max(std::abs(g.taxi_px_lo), std::abs(g.taxi_px_hi)) >=
        g.runway_halfwidth)
      throw std::invalid_argument("start region leaves the runway");
    if (j.contains("expert")) {
      const auto& e = j["expert"];
      env.pid.k_cte = e.value("k_cte", 0.08);
      env.pid.k_he = e.value("k_he", 1.2);
      env.pid.heading_cap = e.value("heading_cap", 0.5);
    }
    parse_common(j, env);
  } else if (env.name == "int1d") {
    Int1dModel m;
    m.ubar = j.value("ubar", 1.0);
    if (m.ubar <= 0.0) throw std::invalid_argument("ubar must be positive");
    env.model = m;
    env.timeout = j.value("timeout", 10.0);
    auto& g = env.geom;
    if (j.contains("line")) {
      g.line_lo = j["line"].value("lo", 0.0);
      g.line_hi = j["line"].value("hi", 4.0);
      g.line_goal = j["line"].value("goal", 3.9);
      if (j["line"].contains("fail_hi"))
        g.line_fail_hi = j["line"]["fail_hi"].get<double>();
      if (j["line"].contains("start")) {
        g.line_start_lo = j["line"]["start"].at(0).get<double>();
        g.line_start_hi = j["line"]["start"].at(1).get<double>();
      }
    }
    if (g.line_goal <= 0.0 || g.line_start_lo <= 0.0)
      throw std::invalid_argument("goal/start must sit outside the failure set");
    parse_common(j, env);
  } else {
    throw std::invalid_argument("unknown model: " + env.name);
  }

  env.canonical_json = j.dump();
  env.hash = fnv1a64(env.canonical_json);
  return env;
}

Environment load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open environment file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return env_from_json_text(ss.str());
}

double target_function(const Environment& env, const State& x) {
  const auto& g = env.geom;
  if (env.name == "taxi") return g.runway_halfwidth - std::abs(x[0]);
  if (env.name == "int1d") return std::min(x[0], g.line_fail_hi - x[0]);
  double l = std::min(std::min(x[0] - g.ws_lo[0], g.ws_hi[0] - x[0]),
                      std::min(x[1] - g.ws_lo[1], g.ws_hi[1] - x[1]));
  for (const Circle& c : g.obstacles) {
    const double d = std::hypot(x[0] - c.cx, x[1] - c.cy) - c.r;
    l = std::min(l, d);
  }
  return l;
}

bool at_goal(const Environment& env, const State& x) {
  const auto& g = env.geom;
  if (env.name == "taxi") return x[1] >= g.end_py;
  if (env.name == "int1d") return x[0] >= g.line_goal;
  return std::hypot(x[0] - g.goal_center[0], x[1] - g.goal_center[1]) <=
         g.goal_radius;
}

State sample_start(const Environment& env, Rng& rng) {
  const auto& g = env.geom;
  if (env.name == "taxi") {
    State x(3);
    x << rng.uniform(g.taxi_px_lo, g.taxi_px_hi), 0.0,
        rng.uniform(g.taxi_th_lo, g.taxi_th_hi);
    return x;
  }
  if (env.name == "int1d") {
    State x(1);
    x << rng.uniform(g.line_start_lo, g.line_start_hi);
    return x;
  }
  State x(3);
  for (int tries = 0; tries < 1000; ++tries) {
    x[0] = rng.uniform(g.start_lo[0], g.start_hi[0]);
    x[1] = rng.uniform(g.start_lo[1], g.start_hi[1]);
    x[2] = 0.0;
    if (target_function(env, x) > 0.0) {
      const double bearing =
          std::atan2(g.goal_center[1] - x[1], g.goal_center[0] - x[0]);
      x[2] = wrap_pi(bearing + rng.uniform(-g.theta_spread, g.theta_spread));
      return x;
    }
  }
  throw std::runtime_error("start sampling failed to leave the failure set");
}

grid::GridPtr make_grid(const Environment& env) {
  return grid::build_grid(env.axes);
}

}  // namespace sgil::models
