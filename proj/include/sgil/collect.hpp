#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sgil/models.hpp"
#include "sgil/policy.hpp"
#include "sgil/reach.hpp"
#include "sgil/rng.hpp"

namespace sgil::collect {

struct DemoRecord {
  int demo_id = 0;
  double t = 0.0;
  models::State x;
  double u_expert = 0.0;   // clean label
  double u_applied = 0.0;  // what actually drove the system
  double dbar = 0.0;       // disturbance budget active at this step
  double v_safe = std::numeric_limits<double>::quiet_NaN();
  bool flag = false;       // demo ended in the failure set
};

struct Dataset {
  std::vector<DemoRecord> records;
  std::string method;
  std::uint64_t env_hash = 0;
  std::uint64_t seed = 0;
  int demos = 0;
  int failures = 0;
  int timeouts = 0;
};

struct CollectionPlan {
  std::string method = "bc";  // safegil | bc | gauss | uniform | dart |
                              // dagger | dagger_safegil
  int K = 10;
  double dbar_max = 0.0;
  double sigma = 0.0;         // gaussian noise std
  int dart_iterations = 2;
  double dart_alpha = 1.0;
  int dagger_iterations = 2;
  std::uint64_t seed = 0;
};

// the expert may consume randomness (sampling MPC); the stream it gets is
// derived per demo so collection order never changes a trajectory
using ExpertFn = std::function<double(const models::State&, Rng&)>;
using TrainFn = std::function<policy::MlpPolicy(const Dataset&)>;

Dataset collect_bc(const models::Environment& env, const ExpertFn& expert,
                   const CollectionPlan& plan,
                   const reach::ValueFunction* vf = nullptr);

Dataset collect_safegil(const models::Environment& env, const ExpertFn& expert,
                        const reach::ValueFunction& vf,
                        const CollectionPlan& plan);

// plan.method picks gaussian or uniform injection
Dataset collect_noise(const models::Environment& env, const ExpertFn& expert,
                      const CollectionPlan& plan,
                      const reach::ValueFunction* vf = nullptr);

Dataset dart_collect(const models::Environment& env, const ExpertFn& expert,
                     const CollectionPlan& plan, const TrainFn& train_fn,
                     const reach::ValueFunction* vf = nullptr);

Dataset dagger_collect(const models::Environment& env, const ExpertFn& expert,
                       const CollectionPlan& plan, const TrainFn& train_fn,
                       bool inject_safegil,
                       const reach::ValueFunction* vf = nullptr);

// dispatch on plan.method
Dataset collect(const models::Environment& env, const ExpertFn& expert,
                const CollectionPlan& plan, const TrainFn& train_fn,
                const reach::ValueFunction* vf = nullptr);

}  // namespace sgil::collect
