#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sgil/collect.hpp"
#include "sgil/models.hpp"
#include "sgil/policy.hpp"
#include "sgil/reach.hpp"
#include "sgil/rng.hpp"
#include "sgil/shield.hpp"

namespace sgil::bench {

enum class Outcome { goal, collision, timeout };

struct ControlDecision {
  double u = 0.0;
  bool engaged = false;
};

// One control query. `rng` feeds stochastic controllers (the sampling
// expert); `was_engaged` threads the previous decision back in so a
// filtered controller can hold its hysteresis band.
struct StepQuery {
  const models::State& x;
  Rng& rng;
  bool was_engaged = false;
};

using Controller = std::function<ControlDecision(const StepQuery&)>;

Controller expert_controller(const models::Environment& env);
Controller policy_controller(policy::MlpPolicy pol);
Controller filtered_controller(policy::MlpPolicy pol,
                               const reach::ValueFunction& vf,
                               shield::FilterConfig cfg);

// Per-step task cost: the sampling expert's stage objective for the
// unicycle, squared centerline offset for the taxi, squared goal distance
// for the line.
double stage_cost(const models::Environment& env, const models::State& x,
                  double u);

struct RolloutOptions {
  const reach::ValueFunction* vf = nullptr;  // scores min_value when given
  std::uint64_t seed = 0;
};

struct RolloutResult {
  std::vector<models::State> states;  // visited states, x0 first
  std::vector<double> actions;
  std::vector<std::uint8_t> engaged;
  std::vector<double> times;
  Outcome outcome = Outcome::timeout;
  double expert_cost = 0.0;  // accrued stage cost
  double min_value = 0.0;    // min V(x; top slice), or min l without a vf
};

RolloutResult rollout(const models::Environment& env, const Controller& ctrl,
                      const models::State& x0, const RolloutOptions& opts);

// One (method, K, seed) evaluation cell.
struct EvalStats {
  int n = 0;
  int goals = 0;
  int collisions = 0;
  int timeouts = 0;
  double failure_rate = 0.0;
  double safe_cost = 0.0;       // mean accrued cost over goal runs
  double centerline_msd = 0.0;  // taxi: mean squared p_x over goal runs
  double final_offset = 0.0;    // mean terminal task offset over goal runs
  double min_value_mean = 0.0;  // mean of per-run minimum values
  double start_value_gate = 0.2;
  double min_start_value = 0.0;  // smallest V(x0; 0) actually sampled
};

// Starts are rejection-sampled outside the failure set; with a value
// function they must also clear the gate V(x0; 0) > start_value_gate so
// doomed starts don't score the policy.
EvalStats evaluate(const models::Environment& env, const Controller& ctrl,
                   int n_starts, std::uint64_t seed,
                   const reach::ValueFunction* vf = nullptr);

struct HistogramSummary {
  std::int64_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double p10 = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> edges;        // bins+1 ascending
  std::vector<std::int64_t> counts; // per bin
};

// Distribution of V(x; top slice) over every record in the dataset.
HistogramSummary dataset_value_histogram(const collect::Dataset& ds,
                                         const reach::ValueFunction& vf);

struct CellReport {
  std::string method;  // display tag, e.g. "safegil" or "bc+filter"
  int K = 0;
  double dbar = 0.0;
  std::uint64_t seed = 0;
  EvalStats eval;
  HistogramSummary data_values;
  std::string error;  // nonempty when the cell failed; other fields zeroed
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct Aggregate {
  std::string method;
  int K = 0;
  double dbar = 0.0;
  std::vector<std::uint64_t> seeds;
  double mean_failure = 0.0;
  double std_failure = 0.0;
  double mean_safe_cost = 0.0;
  double std_safe_cost = 0.0;
  double mean_final_offset = 0.0;
  double mean_ds_value = 0.0;
  int cells = 0;
  int failed_cells = 0;
};

// Mean/std across seeds per (method, K, dbar); order-insensitive in the
// cell list, NaN metrics are skipped.
std::vector<Aggregate> aggregate_cells(const std::vector<CellReport>& cells);

struct ExperimentResult {
  std::vector<CellReport> cells;
  std::vector<Aggregate> aggregates;
  std::string csv_path;
  std::vector<std::string> svg_paths;
};

// Runs the (method x K x dbar x seed) sweep described by an experiment
// spec: collect, train, evaluate per cell, artifacts under out_dir.
// Relative paths resolve against base_dir. Cell failures are recorded in
// the report and the sweep continues.
ExperimentResult run_experiment(const std::string& spec_text,
                                const std::string& base_dir);

}  // namespace sgil::bench
