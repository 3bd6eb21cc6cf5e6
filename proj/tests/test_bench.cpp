#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sgil/bench.hpp"
#include "sgil/bench_io.hpp"
#include "sgil/collect.hpp"
#include "sgil/experts.hpp"
#include "sgil/models.hpp"
#include "sgil/reach.hpp"
#include "sgil/rng.hpp"

using namespace sgil;
using bench::Controller;
using bench::ControlDecision;
using bench::Outcome;
using models::Environment;
using models::State;

namespace {

const Environment& env_line() {
  static Environment e = models::env_from_json_text(
      R"({"model":"int1d","ubar":1.0,"dbar_max":0.5,
          "grid":[{"lo":0.0,"hi":4.0,"n":201}],"dbar_levels":[0.0,0.25,0.5]})");
  return e;
}

const reach::ValueFunction& vf_line() {
  static reach::ValueFunction vf = [] {
    reach::SolverParams p;
    return reach::solve_hji(models::make_grid(env_line()), env_line().model,
                            env_line(), p);
  }();
  return vf;
}

const Environment& env_uni() {
  static Environment e =
      models::load_environment(SGIL_SOURCE_DIR "/configs/unicycle.json");
  return e;
}

const Environment& env_taxi() {
  static Environment e =
      models::load_environment(SGIL_SOURCE_DIR "/configs/taxi.json");
  return e;
}

const reach::ValueFunction& vf_taxi() {
  static reach::ValueFunction vf = [] {
    reach::SolverParams p;
    return reach::solve_hji(models::make_grid(env_taxi()), env_taxi().model,
                            env_taxi(), p);
  }();
  return vf;
}

Controller const_controller(double u) {
  return [u](const bench::StepQuery&) { return ControlDecision{u, false}; };
}

bool stats_equal(const bench::EvalStats& a, const bench::EvalStats& b) {
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.n == b.n && a.goals == b.goals && a.collisions == b.collisions &&
         a.timeouts == b.timeouts && same(a.failure_rate, b.failure_rate) &&
         same(a.safe_cost, b.safe_cost) &&
         same(a.centerline_msd, b.centerline_msd) &&
         same(a.final_offset, b.final_offset) &&
         same(a.min_value_mean, b.min_value_mean) &&
         same(a.min_start_value, b.min_start_value);
}

}  // namespace

TEST_CASE("expert rollouts reach the goal") {
  Rng rng(11);
  Controller expert = bench::expert_controller(env_uni());
  for (int i = 0; i < 5; ++i) {
    State x0 = models::sample_start(env_uni(), rng);
    bench::RolloutOptions opts;
    opts.seed = 100 + i;
    const auto r = bench::rollout(env_uni(), expert, x0, opts);
    REQUIRE(r.outcome == Outcome::goal);
    REQUIRE(r.min_value > 0.0);
    REQUIRE(r.states.size() == r.actions.size() + 1);
    REQUIRE(r.times.size() == r.states.size());
    REQUIRE(r.times.back() ==
            doctest::Approx(r.actions.size() * env_uni().control_dt));
  }
}

TEST_CASE("driving straight at an obstacle is scored as a collision") {
  // first obstacle of the unicycle config sits at (0, 1.5) r=1
  State x0(3);
  x0 << 0.0, 3.5, -M_PI / 2;  // heading straight down into it
  const auto r =
      bench::rollout(env_uni(), const_controller(0.0), x0, {});
  REQUIRE(r.outcome == Outcome::collision);
  REQUIRE(r.min_value <= 0.0);
  REQUIRE(models::target_function(env_uni(), r.states.back()) <= 0.0);
}

TEST_CASE("circling in place runs out the clock") {
  State x0(3);
  x0 << -4.0, 0.0, 0.0;  // turning radius 1, far from goal and obstacles
  const auto r = bench::rollout(env_uni(), const_controller(1.0), x0, {});
  REQUIRE(r.outcome == Outcome::timeout);
  const int cap = static_cast<int>(
      std::ceil(env_uni().timeout / env_uni().control_dt - 1e-9));
  REQUIRE(static_cast<int>(r.actions.size()) == cap);
}

TEST_CASE("controller exceptions surface as rollout diagnostics") {
  Controller broken = [](const bench::StepQuery&) -> ControlDecision {
    throw std::domain_error("boom");
  };
  State x0(3);
  x0 << -4.0, 0.0, 0.0;
  REQUIRE_THROWS_WITH_AS(bench::rollout(env_uni(), broken, x0, {}),
                         doctest::Contains("boom"), std::runtime_error);
}

TEST_CASE("unicycle stage cost matches the expert objective") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    State x(3);
    x << rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
        rng.uniform(-M_PI, M_PI);
    const double u = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd us(1);
    us[0] = u;
    const double direct =
        experts::mpc_cost(env_uni(), {x, x}, us, env_uni().mpc);
    REQUIRE(bench::stage_cost(env_uni(), x, u) == direct);
  }
}

TEST_CASE("taxi trajectory pinned off-center scores its squared offset") {
  State x0(3);
  x0 << 2.0, 0.0, 0.0;  // straight down the runway two meters off the line
  const auto r = bench::rollout(env_taxi(), const_controller(0.0), x0, {});
  REQUIRE(r.outcome == Outcome::goal);
  REQUIRE(r.expert_cost / static_cast<double>(r.actions.size()) ==
          doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("failure rate is the collision count over the start count") {
  // dive to the failure edge from low starts, climb out from high ones
  Controller split = [](const bench::StepQuery& q) {
    return ControlDecision{q.x[0] < 1.0 ? -1.0 : 1.0, false};
  };
  const auto s = bench::evaluate(env_line(), split, 200, 31);
  REQUIRE(s.n == 200);
  REQUIRE(s.goals + s.collisions + s.timeouts == 200);
  REQUIRE(s.collisions > 20);  // the start box straddles the split point
  REQUIRE(s.goals > 20);
  REQUIRE(s.failure_rate == doctest::Approx(s.collisions / 200.0));
  REQUIRE(s.failure_rate >= 0.0);
  REQUIRE(s.failure_rate <= 1.0);
}

TEST_CASE("evaluation is deterministic per seed") {
  Controller expert = bench::expert_controller(env_line());
  const auto a = bench::evaluate(env_line(), expert, 40, 7, &vf_line());
  const auto b = bench::evaluate(env_line(), expert, 40, 7, &vf_line());
  const auto c = bench::evaluate(env_line(), expert, 40, 8, &vf_line());
  REQUIRE(stats_equal(a, b));
  REQUIRE_FALSE(stats_equal(a, c));
}

TEST_CASE("start sampling honors the value gate") {
  const auto s =
      bench::evaluate(env_line(), const_controller(1.0), 100, 3, &vf_line());
  REQUIRE(s.min_start_value > s.start_value_gate);
  REQUIRE(s.collisions == 0);  // full-throttle climb from gated starts
}

TEST_CASE("histogram flags datasets collected inside the failure set") {
  collect::Dataset ds;
  ds.method = "bc";
  ds.demos = 1;
  for (int i = 0; i < 50; ++i) {
    collect::DemoRecord r;
    r.demo_id = 0;
    r.t = 0.1 * i;
    r.x = State::Zero(1);
    r.x[0] = -0.5 - 0.01 * i;  // outside the line, l < 0
    ds.records.push_back(r);
  }
  const auto h = bench::dataset_value_histogram(ds, vf_line());
  REQUIRE(h.count == 50);
  REQUIRE(h.mean <= 0.0);
  REQUIRE(h.median <= 0.0);
  REQUIRE(h.p10 <= h.median);
  std::int64_t total = 0;
  for (auto c : h.counts) total += c;
  REQUIRE(total == h.count);
  REQUIRE(h.edges.size() == h.counts.size() + 1);
  REQUIRE(std::is_sorted(h.edges.begin(), h.edges.end()));
}

TEST_CASE("histogram rejects an empty dataset") {
  collect::Dataset empty;
  REQUIRE_THROWS_AS(bench::dataset_value_histogram(empty, vf_line()),
                    std::invalid_argument);
}

TEST_CASE("disturbance-injected taxi data sits at lower safety values") {
  const collect::ExpertFn expert = [](const State& x, Rng& rng) {
    return experts::expert_action(env_taxi(), x, rng);
  };
  double mean_bc = 0.0, mean_sg = 0.0;
  for (std::uint64_t seed : {1, 2}) {
    collect::CollectionPlan plan;
    plan.K = 8;
    plan.seed = seed;
    plan.method = "bc";
    const auto bc = collect::collect_bc(env_taxi(), expert, plan, &vf_taxi());
    plan.method = "safegil";
    plan.dbar_max = env_taxi().dbar_max;
    const auto sg = collect::collect_safegil(env_taxi(), expert, vf_taxi(), plan);
    mean_bc += bench::dataset_value_histogram(bc, vf_taxi()).mean;
    mean_sg += bench::dataset_value_histogram(sg, vf_taxi()).mean;
  }
  REQUIRE(mean_sg < mean_bc);
}

TEST_CASE("aggregation is insensitive to cell order") {
  std::vector<bench::CellReport> cells;
  Rng rng(99);
  for (const char* m : {"bc", "safegil"})
    for (int K : {5, 10})
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        bench::CellReport c;
        c.method = m;
        c.K = K;
        c.seed = seed;
        c.dbar = 0.5;
        c.eval.failure_rate = rng.uniform01();
        c.eval.safe_cost = rng.uniform(10.0, 20.0);
        c.eval.final_offset = rng.uniform01();
        c.data_values.count = 10;
        c.data_values.mean = rng.uniform(-1.0, 1.0);
        cells.push_back(c);
      }
  cells[3].error = "synthetic failure";

  auto sorted = bench::aggregate_cells(cells);
  std::vector<bench::CellReport> shuffled = cells;
  Rng shuffle_rng(1);
  shuffle_rng.shuffle(shuffled);
  auto again = bench::aggregate_cells(shuffled);

  REQUIRE(sorted.size() == 4);
  REQUIRE(again.size() == sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    REQUIRE(sorted[i].method == again[i].method);
    REQUIRE(sorted[i].K == again[i].K);
    REQUIRE(sorted[i].mean_failure == again[i].mean_failure);
    REQUIRE(sorted[i].std_failure == again[i].std_failure);
    REQUIRE(sorted[i].mean_safe_cost == again[i].mean_safe_cost);
    REQUIRE(sorted[i].seeds == again[i].seeds);
    REQUIRE(sorted[i].failed_cells == again[i].failed_cells);
  }
  int failed = 0;
  for (const auto& a : sorted) failed += a.failed_cells;
  REQUIRE(failed == 1);
}

TEST_CASE("experiment sweep writes reports and reruns byte-identically") {
  namespace fs = std::filesystem;
  const std::string dir = "bench_exp_scratch";
  fs::remove_all(dir);
  fs::create_directories(dir);

  {
    std::ofstream env_out(dir + "/line.json");
    env_out << R"({"model":"int1d","ubar":1.0,"dbar_max":0.5,
        "grid":[{"lo":0.0,"hi":4.0,"n":201}],"dbar_levels":[0.0,0.25,0.5]})";
  }
  io::save_vf(vf_line(), dir + "/line.sgvf");

  const std::string spec = R"({
    "name": "mini",
    "env": "line.json",
    "vf": "line.sgvf",
    "methods": ["bc", "safegil", "bogus"],
    "K": [3, 5],
    "seeds": 2,
    "eval_starts": 12,
    "train": {"epochs": 25, "hidden": [16]},
    "out_dir": "exp"
  })";

  const auto res = bench::run_experiment(spec, dir);
  REQUIRE(res.cells.size() == 3 * 2 * 2);
  int errors = 0;
  for (const auto& c : res.cells) {
    if (!c.error.empty()) {
      ++errors;
      REQUIRE(c.method == "bogus");
    } else {
      REQUIRE(c.eval.n == 12);
      REQUIRE(c.data_values.count > 0);
    }
  }
  REQUIRE(errors == 4);  // the bogus method fails in every cell

  REQUIRE(fs::exists(res.csv_path));
  for (const auto& svg : res.svg_paths) REQUIRE(fs::exists(svg));
  REQUIRE(fs::exists(dir + "/exp/datasets/bc_K3_s0.jsonl"));
  REQUIRE(fs::exists(dir + "/exp/policies/safegil_K5_s1.json"));

  const std::string first = io::read_file(res.csv_path);
  const auto res2 = bench::run_experiment(spec, dir);
  REQUIRE(io::read_file(res2.csv_path) == first);

  const auto table = io::read_csv(res.csv_path);
  REQUIRE(table.header.front() == "method");
  REQUIRE(table.rows.size() == res.cells.size());
}
