#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <set>
#include <variant>

#include "sgil/bench.hpp"
#include "sgil/bench_io.hpp"
#include "sgil/collect.hpp"
#include "sgil/experts.hpp"
#include "sgil/models.hpp"
#include "sgil/policy.hpp"
#include "sgil/reach.hpp"

namespace sgil::io {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kUsageError = 2;
constexpr int kHashError = 3;

int require_files(std::initializer_list<std::string> paths) {
  for (const auto& p : paths)
    if (!p.empty() && !fs::exists(p)) {
      std::fprintf(stderr, "missing file: %s\n", p.c_str());
      return kUsageError;
    }
  return 0;
}

collect::TrainFn make_train_fn(const models::Environment& env,
                               policy::TrainConfig cfg) {
  const double bound = models::control_bound(env.model);
  return [&env, cfg, bound](const collect::Dataset& d) {
    std::vector<models::State> xs;
    Eigen::VectorXd ys(d.records.size());
    xs.reserve(d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      xs.push_back(d.records[i].x);
      ys[static_cast<Eigen::Index>(i)] = d.records[i].u_expert;
    }
    return policy::train(env.name, xs, ys, bound, cfg).policy;
  };
}

struct SolveArgs {
  std::string env_path, out_path;
  double horizon = 0.0;  // 0 keeps the solver default
  double tol = 0.0;
};

int run_solve(const SolveArgs& a) {
  if (int rc = require_files({a.env_path})) return rc;
  const auto env = models::load_environment(a.env_path);
  reach::SolverParams params;
  if (a.horizon > 0.0) params.max_horizon = a.horizon;
  if (a.tol > 0.0) params.convergence_tol = a.tol;
  const auto vf =
      reach::solve_hji(models::make_grid(env), env.model, env, params);
  for (const auto& r : vf.reports)
    std::printf("dbar=%s %s after %d steps (horizon %s)\n",
                format_double(r.dbar).c_str(),
                r.converged ? "converged" : "stopped", r.steps,
                format_double(r.horizon).c_str());
  save_vf(vf, a.out_path);
  std::printf("wrote %s\n", a.out_path.c_str());
  return 0;
}

struct CollectArgs {
  std::string method = "bc";
  std::string env_path, vf_path, out_path;
  int K = 10;
  std::uint64_t seed = 0;
  double dbar = -1.0;  // negative: use the environment bound
  double sigma = -1.0;
  double dart_alpha = 1.0;
  int dart_iterations = 2;
  int dagger_iterations = 2;
  int epochs = 0;  // interim policy training for dart/dagger
};

int run_collect(const CollectArgs& a) {
  if (int rc = require_files({a.env_path, a.vf_path})) return rc;
  const auto env = models::load_environment(a.env_path);

  const bool needs_vf =
      a.method == "safegil" || a.method == "dagger_safegil";
  if (needs_vf && a.vf_path.empty()) {
    std::fprintf(stderr, "%s needs --vf\n", a.method.c_str());
    return kUsageError;
  }
  reach::ValueFunction vf;
  if (!a.vf_path.empty()) vf = load_vf(a.vf_path, &env);

  collect::CollectionPlan plan;
  plan.method = a.method;
  plan.K = a.K;
  plan.seed = a.seed;
  plan.dbar_max = a.dbar >= 0.0 ? a.dbar : env.dbar_max;
  plan.sigma = a.sigma >= 0.0 ? a.sigma : env.dbar_max / 2.0;
  plan.dart_alpha = a.dart_alpha;
  plan.dart_iterations = a.dart_iterations;
  plan.dagger_iterations = a.dagger_iterations;

  policy::TrainConfig tc;
  tc.seed = a.seed;
  if (a.epochs > 0) tc.epochs = a.epochs;

  const collect::ExpertFn expert = [&env](const models::State& x, Rng& rng) {
    return experts::expert_action(env, x, rng);
  };
  const auto ds = collect::collect(env, expert, plan, make_train_fn(env, tc),
                                   a.vf_path.empty() ? nullptr : &vf);
  save_dataset(ds, a.out_path);
  std::printf("%s: %zu records over %d demos (%d failures, %d timeouts) -> %s\n",
              a.method.c_str(), ds.records.size(), ds.demos, ds.failures,
              ds.timeouts, a.out_path.c_str());
  return 0;
}

struct TrainArgs {
  std::string data_path, cfg_path, env_path, out_path;
};

int run_train(const TrainArgs& a) {
  if (int rc = require_files({a.data_path, a.cfg_path, a.env_path})) return rc;
  const auto ds = load_dataset(a.data_path);

  json cfg = json::object();
  if (!a.cfg_path.empty()) cfg = json::parse(read_file(a.cfg_path));

  std::string features = cfg.value("features", std::string{});
  double out_scale = cfg.value("out_scale", 0.0);
  std::uint64_t env_hash = 0;
  if (!a.env_path.empty()) {
    const auto env = models::load_environment(a.env_path);
    if (env.hash != ds.env_hash) {
      std::fprintf(stderr,
                   "dataset was collected on a different environment "
                   "(hash %llu vs %llu)\n",
                   static_cast<unsigned long long>(ds.env_hash),
                   static_cast<unsigned long long>(env.hash));
      return kHashError;
    }
    if (features.empty()) features = env.name;
    if (out_scale <= 0.0) out_scale = models::control_bound(env.model);
    env_hash = env.hash;
  }
  if (features.empty() || out_scale <= 0.0) {
    std::fprintf(stderr,
                 "need features and out_scale, via --cfg or --env\n");
    return kUsageError;
  }

  policy::TrainConfig tc;
  tc.hidden = cfg.value("hidden", tc.hidden);
  tc.lr = cfg.value("lr", tc.lr);
  tc.batch = cfg.value("batch", tc.batch);
  tc.epochs = cfg.value("epochs", tc.epochs);
  tc.seed = cfg.value("seed", std::uint64_t{0});

  std::vector<models::State> xs;
  Eigen::VectorXd ys(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    xs.push_back(ds.records[i].x);
    ys[static_cast<Eigen::Index>(i)] = ds.records[i].u_expert;
  }
  const auto result = policy::train(features, xs, ys, out_scale, tc);

  json meta;
  meta["features"] = features;
  meta["seed"] = tc.seed;
  meta["records"] = ds.records.size();
  meta["method"] = ds.method;
  meta["env_hash"] = env_hash ? env_hash : ds.env_hash;
  save_policy(result.policy, a.out_path, meta.dump());
  std::printf("trained on %zu records, final loss %s -> %s\n", xs.size(),
              format_double(result.loss_curve.back()).c_str(),
              a.out_path.c_str());
  return 0;
}

struct EvalArgs {
  std::string policy_path, env_path, vf_path, out_path;
  int n = 100;
  std::uint64_t seed = 0;
  bool filter = false;
  double threshold = 0.05;
  double hysteresis = 0.0;
  double dbar_slice = -1.0;
};

int run_eval(const EvalArgs& a) {
  if (int rc = require_files({a.policy_path, a.env_path, a.vf_path})) return rc;
  const auto env = models::load_environment(a.env_path);

  std::string meta_text;
  const auto pol = load_policy(a.policy_path, &meta_text);
  const json meta = json::parse(meta_text);
  if (meta.contains("env_hash") &&
      meta["env_hash"].get<std::uint64_t>() != env.hash) {
    std::fprintf(stderr, "policy was trained on a different environment\n");
    return kHashError;
  }

  if (a.filter && a.vf_path.empty()) {
    std::fprintf(stderr, "--filter needs --vf\n");
    return kUsageError;
  }
  reach::ValueFunction vf;
  const reach::ValueFunction* vfp = nullptr;
  if (!a.vf_path.empty()) {
    vf = load_vf(a.vf_path, &env);
    vfp = &vf;
  }

  bench::Controller ctrl;
  if (a.filter) {
    shield::FilterConfig fc;
    fc.threshold = a.threshold;
    fc.hysteresis = a.hysteresis;
    fc.dbar = a.dbar_slice;
    ctrl = bench::filtered_controller(pol, vf, fc);
  } else {
    ctrl = bench::policy_controller(pol);
  }

  const auto stats = bench::evaluate(env, ctrl, a.n, a.seed, vfp);
  std::printf(
      "n=%d goal=%d collision=%d timeout=%d failure_rate=%s safe_cost=%s "
      "centerline_msd=%s final_offset=%s\n",
      stats.n, stats.goals, stats.collisions, stats.timeouts,
      format_double(stats.failure_rate).c_str(),
      format_double(stats.safe_cost).c_str(),
      format_double(stats.centerline_msd).c_str(),
      format_double(stats.final_offset).c_str());

  if (!a.out_path.empty()) {
    write_csv(a.out_path,
              {"n", "goals", "collisions", "timeouts", "failure_rate",
               "safe_cost", "centerline_msd", "final_offset", "min_value_mean",
               "start_gate", "min_start_value"},
              {{std::to_string(stats.n), std::to_string(stats.goals),
                std::to_string(stats.collisions),
                std::to_string(stats.timeouts),
                format_double(stats.failure_rate),
                format_double(stats.safe_cost),
                format_double(stats.centerline_msd),
                format_double(stats.final_offset),
                format_double(stats.min_value_mean),
                format_double(stats.start_value_gate),
                format_double(stats.min_start_value)}});
  }
  return 0;
}

int run_ablate(const std::string& spec_path) {
  if (int rc = require_files({spec_path})) return rc;
  const std::string base = fs::path(spec_path).parent_path().string();
  const auto result = bench::run_experiment(read_file(spec_path),
                                            base.empty() ? "." : base);
  for (const auto& a : result.aggregates)
    std::printf("%s K=%d dbar=%s failure=%s+-%s cost=%s+-%s\n",
                a.method.c_str(), a.K, format_double(a.dbar).c_str(),
                format_double(a.mean_failure).c_str(),
                format_double(a.std_failure).c_str(),
                format_double(a.mean_safe_cost).c_str(),
                format_double(a.std_safe_cost).c_str());
  std::printf("report: %s\n", result.csv_path.c_str());
  return 0;
}

int run_report(const std::string& dir) {
  const fs::path reports = fs::path(dir) / "reports";
  if (!fs::is_directory(reports)) {
    std::fprintf(stderr, "missing file: %s\n", reports.string().c_str());
    return kUsageError;
  }
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(reports))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) {
    std::fprintf(stderr, "no report csv under %s\n", reports.string().c_str());
    return kUsageError;
  }

  std::set<std::string> hashes;
  for (const auto& p : csvs) {
    const CsvTable t = read_csv(p.string());
    const int hc = t.column("env_hash");
    if (hc < 0) continue;
    for (const auto& row : t.rows) hashes.insert(row[hc]);
  }
  if (hashes.size() > 1) {
    std::fprintf(stderr, "refusing to mix %zu different env hashes\n",
                 hashes.size());
    return kHashError;
  }

  fs::create_directories(fs::path(dir) / "plots");
  for (const auto& p : csvs) {
    const CsvTable t = read_csv(p.string());
    PlotSpec ps;
    const int dc = t.column("dbar");
    if (dc >= 0) {
      std::set<std::string> dbars;
      for (const auto& row : t.rows) dbars.insert(row[dc]);
      if (dbars.size() > 1) ps.x_col = "dbar";
    }
    ps.title = p.stem().string();
    for (const std::string y : {"failure_rate", "safe_cost"}) {
      ps.y_col = y;
      const std::string svg =
          (fs::path(dir) / "plots" / (p.stem().string() + "_" + y + ".svg"))
              .string();
      plot_svg(p.string(), svg, ps);
      std::printf("wrote %s\n", svg.c_str());
    }
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"reachability-guided imitation learning toolkit"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "solve the safety value function");
  solve->add_option("--env", solve_args.env_path, "environment json")
      ->required();
  solve->add_option("--out", solve_args.out_path, "output .sgvf")->required();
  solve->add_option("--horizon", solve_args.horizon, "backward horizon cap");
  solve->add_option("--tol", solve_args.tol, "convergence tolerance");

  CollectArgs collect_args;
  auto* coll = app.add_subcommand("collect", "collect demonstrations");
  coll->add_option("--method", collect_args.method, "collection method")
      ->check(CLI::IsMember({"bc", "safegil", "gauss", "uniform", "dart",
                             "dagger", "dagger_safegil"}))
      ->required();
  coll->add_option("--env", collect_args.env_path, "environment json")
      ->required();
  coll->add_option("--vf", collect_args.vf_path, "value function .sgvf");
  coll->add_option("-K,--demos", collect_args.K, "number of demonstrations");
  coll->add_option("--seed", collect_args.seed, "seed");
  coll->add_option("--dbar", collect_args.dbar, "disturbance budget");
  coll->add_option("--sigma", collect_args.sigma, "gaussian noise std");
  coll->add_option("--dart-alpha", collect_args.dart_alpha, "dart scale");
  coll->add_option("--dart-iterations", collect_args.dart_iterations,
                   "dart retraining rounds");
  coll->add_option("--dagger-iterations", collect_args.dagger_iterations,
                   "dagger rounds");
  coll->add_option("--epochs", collect_args.epochs,
                   "interim training epochs for dart/dagger");
  coll->add_option("--out", collect_args.out_path, "output .jsonl")
      ->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "behavior-clone a policy");
  train->add_option("--data", train_args.data_path, "dataset .jsonl")
      ->required();
  train->add_option("--cfg", train_args.cfg_path, "training config json");
  train->add_option("--env", train_args.env_path, "environment json");
  train->add_option("--out", train_args.out_path, "output policy json")
      ->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "roll out a trained policy");
  eval->add_option("--policy", eval_args.policy_path, "policy json")
      ->required();
  eval->add_option("--env", eval_args.env_path, "environment json")
      ->required();
  eval->add_option("--vf", eval_args.vf_path, "value function .sgvf");
  eval->add_option("-n,--starts", eval_args.n, "evaluation starts");
  eval->add_option("--seed", eval_args.seed, "seed");
  eval->add_flag("--filter", eval_args.filter, "wrap with the safety filter");
  eval->add_option("--threshold", eval_args.threshold, "filter threshold");
  eval->add_option("--hysteresis", eval_args.hysteresis, "filter hysteresis");
  eval->add_option("--dbar-slice", eval_args.dbar_slice,
                   "filtering slice (negative: most robust)");
  eval->add_option("--out", eval_args.out_path, "write a one-row csv");

  std::string spec_path;
  auto* ablate = app.add_subcommand("ablate", "run an experiment sweep");
  ablate->add_option("--spec", spec_path, "experiment spec json")->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "regenerate plots from reports");
  report->add_option("--dir", report_dir, "experiment output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (solve->parsed()) return run_solve(solve_args);
    if (coll->parsed()) return run_collect(collect_args);
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (ablate->parsed()) return run_ablate(spec_path);
    if (report->parsed()) return run_report(report_dir);
  } catch (const HashMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kHashError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace sgil::io
