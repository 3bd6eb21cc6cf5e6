#include "sgil/collect.hpp"

#include <cmath>
#include <stdexcept>

namespace sgil::collect {

namespace {

enum class Mode { clean, safegil, gauss, uniform, learner };
enum class Outcome { goal, failure, timeout };

struct DemoJob {
  Mode mode = Mode::clean;
  double dbar_max = 0.0;
  double noise_std = 0.0;               // gauss / dart tranches
  const policy::MlpPolicy* actor = nullptr;  // learner rollouts
};

Outcome run_demo(const models::Environment& env, const ExpertFn& expert,
                 const reach::ValueFunction* vf, const CollectionPlan& plan,
                 const DemoJob& job, int demo_id,
                 std::vector<DemoRecord>& out) {
  Rng start_rng = Rng::stream(plan.seed, "demo-start", demo_id);
  Rng expert_rng = Rng::stream(plan.seed, "demo-expert", demo_id);
  Rng dist_rng = Rng::stream(plan.seed, "demo-dist", demo_id);

  models::State x = models::sample_start(env, start_rng);
  const std::size_t first = out.size();
  Outcome outcome = Outcome::timeout;
  const double dt = env.control_dt;

  for (int k = 0;; ++k) {
    if (models::target_function(env, x) <= 0.0) {
      outcome = Outcome::failure;
      break;
    }
    if (models::at_goal(env, x)) {
      outcome = Outcome::goal;
      break;
    }
    if (k * dt >= env.timeout) {
      outcome = Outcome::timeout;
      break;
    }

    DemoRecord r;
    r.demo_id = demo_id;
    r.t = k * dt;
    r.x = x;
    r.u_expert = expert(x, expert_rng);
    r.dbar = 0.0;
    double d = 0.0;
    switch (job.mode) {
      case Mode::clean:
        r.u_applied = r.u_expert;
        break;
      case Mode::safegil: {
        r.dbar = dist_rng.uniform(0.0, job.dbar_max);
        d = reach::query_disturbance(*vf, x, r.dbar);
        r.u_applied = r.u_expert + d;
        break;
      }
      case Mode::gauss:
        if (job.noise_std > 0.0 && job.dbar_max > 0.0) {
          r.dbar = job.dbar_max;
          d = dist_rng.truncated_normal(0.0, job.noise_std, -job.dbar_max,
                                        job.dbar_max);
        }
        r.u_applied = r.u_expert + d;
        break;
      case Mode::uniform:
        r.dbar = job.dbar_max;
        d = dist_rng.uniform(-job.dbar_max, job.dbar_max);
        r.u_applied = r.u_expert + d;
        break;
      case Mode::learner:
        r.u_applied = policy::forward(*job.actor, x);
        break;
    }
    if (vf) r.v_safe = reach::query_value(*vf, x, env.dbar_max);
    out.push_back(std::move(r));

    if (job.mode == Mode::learner)
      x = models::step_rk4(env.model, x, out.back().u_applied, 0.0, dt,
                           env.integrator_dt);
    else
      x = models::step_rk4(env.model, x, out.back().u_expert, d, dt,
                           env.integrator_dt);
  }

  if (outcome == Outcome::failure)
    for (std::size_t i = first; i < out.size(); ++i) out[i].flag = true;
  return outcome;
}

Dataset run_plan(const models::Environment& env, const ExpertFn& expert,
                 const reach::ValueFunction* vf, const CollectionPlan& plan,
                 const std::vector<DemoJob>& jobs) {
  if (plan.K < 1) throw std::invalid_argument("need at least one demo");
  if (static_cast<int>(jobs.size()) != plan.K)
    throw std::invalid_argument("one job per demo expected");
  Dataset ds;
  ds.method = plan.method;
  ds.env_hash = env.hash;
  ds.seed = plan.seed;
  ds.demos = plan.K;
  for (int id = 0; id < plan.K; ++id) {
    const Outcome o = run_demo(env, expert, vf, plan, jobs[id], id, ds.records);
    if (o == Outcome::failure) ++ds.failures;
    if (o == Outcome::timeout) ++ds.timeouts;
  }
  return ds;
}

void require_matching(const models::Environment& env,
                      const reach::ValueFunction& vf) {
  if (vf.env_hash != env.hash)
    throw std::invalid_argument(
        "value function was solved for a different environment");
}

// split K demos over n tranches, earlier tranches take the remainder
std::vector<int> tranche_sizes(int K, int n) {
  std::vector<int> sz(n, K / n);
  for (int i = 0; i < K % n; ++i) ++sz[i];
  return sz;
}

}  // namespace

Dataset collect_bc(const models::Environment& env, const ExpertFn& expert,
                   const CollectionPlan& plan,
                   const reach::ValueFunction* vf) {
  std::vector<DemoJob> jobs(plan.K);
  return run_plan(env, expert, vf, plan, jobs);
}

Dataset collect_safegil(const models::Environment& env, const ExpertFn& expert,
                        const reach::ValueFunction& vf,
                        const CollectionPlan& plan) {
  require_matching(env, vf);
  DemoJob job;
  job.mode = Mode::safegil;
  job.dbar_max = plan.dbar_max;
  std::vector<DemoJob> jobs(plan.K, job);
  return run_plan(env, expert, &vf, plan, jobs);
}

Dataset collect_noise(const models::Environment& env, const ExpertFn& expert,
                      const CollectionPlan& plan,
                      const reach::ValueFunction* vf) {
  if (plan.method != "gauss" && plan.method != "uniform")
    throw std::invalid_argument("noise collection is gauss or uniform");
  DemoJob job;
  job.mode = plan.method == "gauss" ? Mode::gauss : Mode::uniform;
  job.dbar_max = plan.dbar_max;
  job.noise_std = plan.sigma;
  std::vector<DemoJob> jobs(plan.K, job);
  return run_plan(env, expert, vf, plan, jobs);
}

Dataset dart_collect(const models::Environment& env, const ExpertFn& expert,
                     const CollectionPlan& plan, const TrainFn& train_fn,
                     const reach::ValueFunction* vf) {
  if (plan.dart_iterations < 1)
    throw std::invalid_argument("dart needs at least one iteration");
  const std::vector<int> sizes = tranche_sizes(plan.K, plan.dart_iterations);

  std::vector<DemoJob> jobs;
  jobs.reserve(plan.K);
  Dataset ds;
  ds.method = plan.method;
  ds.env_hash = env.hash;
  ds.seed = plan.seed;
  ds.demos = plan.K;

  int next_id = 0;
  for (int it = 0; it < plan.dart_iterations; ++it) {
    DemoJob job;
    if (it > 0) {
      const policy::MlpPolicy interim = train_fn(ds);
      double sq = 0.0;
      for (const DemoRecord& r : ds.records) {
        const double e = r.u_expert - policy::forward(interim, r.x);
        sq += e * e;
      }
      const double sigma2 =
          ds.records.empty() ? 0.0 : sq / static_cast<double>(ds.records.size());
      job.mode = Mode::gauss;
      job.dbar_max = plan.dbar_max;
      job.noise_std = std::sqrt(plan.dart_alpha * sigma2);
    }
    for (int j = 0; j < sizes[it]; ++j, ++next_id) {
      const Outcome o =
          run_demo(env, expert, vf, plan, job, next_id, ds.records);
      if (o == Outcome::failure) ++ds.failures;
      if (o == Outcome::timeout) ++ds.timeouts;
    }
  }
  return ds;
}

Dataset dagger_collect(const models::Environment& env, const ExpertFn& expert,
                       const CollectionPlan& plan, const TrainFn& train_fn,
                       bool inject_safegil, const reach::ValueFunction* vf) {
  if (plan.dagger_iterations < 1)
    throw std::invalid_argument("dagger needs at least one iteration");
  if (inject_safegil && !vf)
    throw std::invalid_argument(
        "safegil-seeded dagger needs the value function");
  const std::vector<int> sizes = tranche_sizes(plan.K, plan.dagger_iterations);

  Dataset ds;
  ds.method = plan.method;
  ds.env_hash = env.hash;
  ds.seed = plan.seed;
  ds.demos = plan.K;

  policy::MlpPolicy actor;
  int next_id = 0;
  for (int it = 0; it < plan.dagger_iterations; ++it) {
    DemoJob job;
    if (it == 0) {
      if (inject_safegil) {
        job.mode = Mode::safegil;
        job.dbar_max = plan.dbar_max;
      }
    } else {
      actor = train_fn(ds);
      job.mode = Mode::learner;
      job.actor = &actor;
    }
    for (int j = 0; j < sizes[it]; ++j, ++next_id) {
      const Outcome o =
          run_demo(env, expert, vf, plan, job, next_id, ds.records);
      if (o == Outcome::failure) ++ds.failures;
      if (o == Outcome::timeout) ++ds.timeouts;
    }
  }
  return ds;
}

Dataset collect(const models::Environment& env, const ExpertFn& expert,
                const CollectionPlan& plan, const TrainFn& train_fn,
                const reach::ValueFunction* vf) {
  if (plan.method == "bc") return collect_bc(env, expert, plan, vf);
  if (plan.method == "safegil") {
    if (!vf) throw std::invalid_argument("safegil needs the value function");
    return collect_safegil(env, expert, *vf, plan);
  }
  if (plan.method == "gauss" || plan.method == "uniform")
    return collect_noise(env, expert, plan, vf);
  if (plan.method == "dart") return dart_collect(env, expert, plan, train_fn, vf);
  if (plan.method == "dagger")
    return dagger_collect(env, expert, plan, train_fn, false, vf);
  if (plan.method == "dagger_safegil")
    return dagger_collect(env, expert, plan, train_fn, true, vf);
  throw std::invalid_argument("unknown collection method: " + plan.method);
}

}  // namespace sgil::collect
