#include "sgil/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <map>
#include <stdexcept>
#include <variant>

#include "sgil/bench_io.hpp"
#include "sgil/experts.hpp"

namespace sgil::bench {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double final_offset(const models::Environment& env, const models::State& x) {
  if (env.name == "unicycle")
    return std::hypot(x[0] - env.geom.goal_center[0],
                      x[1] - env.geom.goal_center[1]);
  if (env.name == "taxi") return std::abs(x[0]);
  return std::abs(x[0] - env.geom.line_goal);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double percentile(const std::vector<double>& sorted, double q) {
  const auto n = sorted.size();
  if (n == 0) return kNan;
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

Controller expert_controller(const models::Environment& env) {
  return [&env](const StepQuery& q) {
    return ControlDecision{experts::expert_action(env, q.x, q.rng), false};
  };
}

Controller policy_controller(policy::MlpPolicy pol) {
  return [pol = std::move(pol)](const StepQuery& q) {
    return ControlDecision{policy::forward(pol, q.x), false};
  };
}

Controller filtered_controller(policy::MlpPolicy pol,
                               const reach::ValueFunction& vf,
                               shield::FilterConfig cfg) {
  return [pol = std::move(pol), &vf, cfg](const StepQuery& q) {
    const double u = policy::forward(pol, q.x);
    const auto r = shield::filtered_action(vf, q.x, u, cfg, q.was_engaged);
    return ControlDecision{r.u, r.engaged};
  };
}

double stage_cost(const models::Environment& env, const models::State& x,
                  double u) {
  if (env.name == "unicycle") {
    Eigen::VectorXd us(1);
    us[0] = u;
    return experts::mpc_cost(env, {x, x}, us, env.mpc);
  }
  if (env.name == "taxi") return x[0] * x[0];
  const double dx = x[0] - env.geom.line_goal;
  return dx * dx;
}

RolloutResult rollout(const models::Environment& env, const Controller& ctrl,
                      const models::State& x0, const RolloutOptions& opts) {
  RolloutResult r;
  Rng rng = Rng::stream(opts.seed, "rollout");
  const int cap =
      static_cast<int>(std::ceil(env.timeout / env.control_dt - 1e-9));

  models::State x = x0;
  bool was_engaged = false;
  r.states.push_back(x);
  r.times.push_back(0.0);
  r.min_value = std::numeric_limits<double>::infinity();

  auto score = [&](const models::State& s) {
    const double v = opts.vf
                         ? reach::query_value(*opts.vf, s, opts.vf->dbar_max())
                         : models::target_function(env, s);
    r.min_value = std::min(r.min_value, v);
  };
  score(x);

  for (int k = 0;; ++k) {
    if (models::target_function(env, x) <= 0.0) {
      r.outcome = Outcome::collision;
      break;
    }
    if (models::at_goal(env, x)) {
      r.outcome = Outcome::goal;
      break;
    }
    if (k >= cap) {
      r.outcome = Outcome::timeout;
      break;
    }
    ControlDecision dec;
    try {
      dec = ctrl(StepQuery{x, rng, was_engaged});
    } catch (const std::exception& e) {
      throw std::runtime_error("controller failed at t=" +
                               std::to_string(k * env.control_dt) + ": " +
                               e.what());
    }
    was_engaged = dec.engaged;
    x = models::step_rk4(env.model, x, dec.u, 0.0, env.control_dt,
                         env.integrator_dt);
    r.actions.push_back(dec.u);
    r.engaged.push_back(dec.engaged ? 1 : 0);
    r.states.push_back(x);
    r.times.push_back((k + 1) * env.control_dt);
    r.expert_cost += stage_cost(env, x, dec.u);
    score(x);
  }
  return r;
}

EvalStats evaluate(const models::Environment& env, const Controller& ctrl,
                   int n_starts, std::uint64_t seed,
                   const reach::ValueFunction* vf) {
  if (n_starts < 1) throw std::invalid_argument("need at least one start");

  EvalStats s;
  s.n = n_starts;
  s.min_start_value = vf ? std::numeric_limits<double>::infinity() : kNan;

  Rng start_rng = Rng::stream(seed, "eval-start");
  std::vector<double> costs, msds, offsets, min_values;

  for (int run = 0; run < n_starts; ++run) {
    models::State x0;
    bool ok = false;
    for (int tries = 0; tries < 100000; ++tries) {
      x0 = models::sample_start(env, start_rng);
      if (models::target_function(env, x0) <= 0.0) continue;
      if (vf) {
        const double v0 = reach::query_value(*vf, x0, 0.0);
        if (v0 <= s.start_value_gate) continue;
        s.min_start_value = std::min(s.min_start_value, v0);
      }
      ok = true;
      break;
    }
    if (!ok)
      throw std::runtime_error("start sampling exhausted above the value gate");

    RolloutOptions opts;
    opts.vf = vf;
    opts.seed = Rng::stream(seed, "eval-run", run).uniform_int(
        0, std::numeric_limits<int>::max());
    const RolloutResult rr = rollout(env, ctrl, x0, opts);

    min_values.push_back(rr.min_value);
    switch (rr.outcome) {
      case Outcome::collision:
        ++s.collisions;
        break;
      case Outcome::timeout:
        ++s.timeouts;
        break;
      case Outcome::goal:
        ++s.goals;
        costs.push_back(rr.expert_cost);
        offsets.push_back(final_offset(env, rr.states.back()));
        if (env.name == "taxi" && !rr.actions.empty())
          msds.push_back(rr.expert_cost /
                         static_cast<double>(rr.actions.size()));
        break;
    }
  }

  s.failure_rate = static_cast<double>(s.collisions) / n_starts;
  s.safe_cost = mean_of(costs);
  s.centerline_msd = env.name == "taxi" ? mean_of(msds) : kNan;
  s.final_offset = mean_of(offsets);
  s.min_value_mean = mean_of(min_values);
  return s;
}

HistogramSummary dataset_value_histogram(const collect::Dataset& ds,
                                         const reach::ValueFunction& vf) {
  if (ds.records.empty())
    throw std::invalid_argument("histogram of an empty dataset");

  std::vector<double> vals;
  vals.reserve(ds.records.size());
  for (const auto& r : ds.records)
    vals.push_back(reach::query_value(vf, r.x, vf.dbar_max()));
  std::sort(vals.begin(), vals.end());

  HistogramSummary h;
  h.count = static_cast<std::int64_t>(vals.size());
  h.mean = mean_of(vals);
  h.median = percentile(vals, 0.5);
  h.p10 = percentile(vals, 0.1);

  constexpr int kBins = 30;
  const double lo = vals.front();
  const double hi = vals.back() > lo ? vals.back() : lo + 1.0;
  h.edges.resize(kBins + 1);
  h.counts.assign(kBins, 0);
  for (int b = 0; b <= kBins; ++b)
    h.edges[b] = lo + (hi - lo) * b / static_cast<double>(kBins);
  for (double v : vals) {
    int b = static_cast<int>((v - lo) / (hi - lo) * kBins);
    ++h.counts[std::clamp(b, 0, kBins - 1)];
  }
  return h;
}

std::vector<Aggregate> aggregate_cells(const std::vector<CellReport>& cells) {
  std::map<std::tuple<std::string, int, double>, std::vector<const CellReport*>>
      groups;
  for (const auto& c : cells)
    groups[{c.method, c.K, c.dbar}].push_back(&c);

  std::vector<Aggregate> out;
  for (auto& [key, members] : groups) {
    // canonical member order so the summed statistics do not depend on the
    // order the cells were produced in
    std::sort(members.begin(), members.end(),
              [](const CellReport* x, const CellReport* y) {
                return x->seed < y->seed;
              });
    Aggregate a;
    a.method = std::get<0>(key);
    a.K = std::get<1>(key);
    a.dbar = std::get<2>(key);
    a.cells = static_cast<int>(members.size());

    std::vector<double> fail, cost, off, dsv;
    std::vector<std::uint64_t> seeds;
    for (const CellReport* c : members) {
      seeds.push_back(c->seed);
      if (!c->error.empty()) {
        ++a.failed_cells;
        continue;
      }
      fail.push_back(c->eval.failure_rate);
      if (std::isfinite(c->eval.safe_cost)) cost.push_back(c->eval.safe_cost);
      if (std::isfinite(c->eval.final_offset))
        off.push_back(c->eval.final_offset);
      if (c->data_values.count > 0) dsv.push_back(c->data_values.mean);
    }
    std::sort(seeds.begin(), seeds.end());
    a.seeds = std::move(seeds);
    a.mean_failure = mean_of(fail);
    a.std_failure = sample_std(fail);
    a.mean_safe_cost = mean_of(cost);
    a.std_safe_cost = sample_std(cost);
    a.mean_final_offset = mean_of(off);
    a.mean_ds_value = mean_of(dsv);
    out.push_back(std::move(a));
  }
  return out;
}

namespace {

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base) / path).string();
}

std::string cell_stem(const CellReport& c, bool tag_dbar) {
  std::string s = c.method;
  for (auto& ch : s)
    if (ch == '+') ch = '_';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "_K%d", c.K);
  s += buf;
  if (tag_dbar) {
    std::snprintf(buf, sizeof(buf), "_d%.2f", c.dbar);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "_s%llu",
                static_cast<unsigned long long>(c.seed));
  s += buf;
  return s;
}

}  // namespace

ExperimentResult run_experiment(const std::string& spec_text,
                                const std::string& base_dir) {
  const nlohmann::json spec = nlohmann::json::parse(spec_text);

  const models::Environment env =
      models::load_environment(resolve(base_dir, spec.at("env").get<std::string>()));

  reach::ValueFunction vf_storage;
  const reach::ValueFunction* vf = nullptr;
  if (spec.contains("vf")) {
    vf_storage = io::load_vf(resolve(base_dir, spec["vf"].get<std::string>()), &env);
    vf = &vf_storage;
  }

  const auto methods = spec.at("methods").get<std::vector<std::string>>();
  const auto k_grid = spec.at("K").get<std::vector<int>>();

  std::vector<double> dbar_grid;
  const auto cj = spec.value("collect", nlohmann::json::object());
  if (spec.contains("dbar_grid"))
    dbar_grid = spec["dbar_grid"].get<std::vector<double>>();
  else
    dbar_grid = {cj.value("dbar_max", env.dbar_max)};

  std::vector<std::uint64_t> seeds;
  if (spec.at("seeds").is_number()) {
    for (int i = 0; i < spec["seeds"].get<int>(); ++i) seeds.push_back(i);
  } else {
    seeds = spec["seeds"].get<std::vector<std::uint64_t>>();
  }

  const int eval_starts = spec.value("eval_starts", 100);
  const std::string name = spec.value("name", "experiment");

  policy::TrainConfig base_train;
  if (spec.contains("train")) {
    const auto& t = spec["train"];
    base_train.hidden = t.value("hidden", base_train.hidden);
    base_train.lr = t.value("lr", base_train.lr);
    base_train.batch = t.value("batch", base_train.batch);
    base_train.epochs = t.value("epochs", base_train.epochs);
  }

  shield::FilterConfig fcfg;
  if (spec.contains("filter")) {
    const auto& f = spec["filter"];
    fcfg.threshold = f.value("threshold", fcfg.threshold);
    fcfg.dbar = f.value("dbar", fcfg.dbar);
    fcfg.hysteresis = f.value("hysteresis", fcfg.hysteresis);
  }

  const std::string out_dir = resolve(base_dir, spec.value("out_dir", "out"));
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/reports");
  fs::create_directories(out_dir + "/plots");
  fs::create_directories(out_dir + "/datasets");
  fs::create_directories(out_dir + "/policies");

  const double out_scale = models::control_bound(env.model);
  const collect::ExpertFn expert = [&env](const models::State& x, Rng& rng) {
    return experts::expert_action(env, x, rng);
  };

  ExperimentResult result;
  const bool tag_dbar = dbar_grid.size() > 1;

  for (const auto& method : methods) {
    for (int K : k_grid) {
      for (double dbar : dbar_grid) {
        for (std::uint64_t seed : seeds) {
          CellReport cell;
          cell.K = K;
          cell.dbar = dbar;
          cell.seed = seed;

          const bool filtered = method.size() > 7 &&
                                method.substr(method.size() - 7) == "+filter";
          const std::string base_method =
              filtered ? method.substr(0, method.size() - 7) : method;
          cell.method = method;
          if (tag_dbar) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "@%.2f", dbar);
            cell.method += buf;
          }

          const auto t0 = std::chrono::steady_clock::now();
          try {
            collect::CollectionPlan plan;
            plan.method = base_method;
            plan.K = K;
            plan.dbar_max = dbar;
            plan.sigma = cj.value("sigma", env.dbar_max / 2.0);
            plan.dart_iterations = cj.value("dart_iterations", 2);
            plan.dart_alpha = cj.value("dart_alpha", 1.0);
            plan.dagger_iterations = cj.value("dagger_iterations", 2);
            plan.seed = seed;

            policy::TrainConfig tc = base_train;
            tc.seed = seed;
            const collect::TrainFn train_fn =
                [&env, tc, out_scale](const collect::Dataset& d) {
                  std::vector<models::State> xs;
                  Eigen::VectorXd ys(d.records.size());
                  xs.reserve(d.records.size());
                  for (std::size_t i = 0; i < d.records.size(); ++i) {
                    xs.push_back(d.records[i].x);
                    ys[static_cast<Eigen::Index>(i)] = d.records[i].u_expert;
                  }
                  return policy::train(env.name, xs, ys, out_scale, tc).policy;
                };

            const collect::Dataset ds =
                collect::collect(env, expert, plan, train_fn, vf);
            const policy::MlpPolicy pol = train_fn(ds);
            const auto t1 = std::chrono::steady_clock::now();
            cell.train_seconds = std::chrono::duration<double>(t1 - t0).count();

            if (filtered && !vf)
              throw std::invalid_argument(
                  "filtered evaluation needs a value function");
            const Controller ctrl =
                filtered ? filtered_controller(pol, *vf, fcfg)
                         : policy_controller(pol);
            cell.eval = evaluate(env, ctrl, eval_starts, seed, vf);
            if (vf) cell.data_values = dataset_value_histogram(ds, *vf);
            const auto t2 = std::chrono::steady_clock::now();
            cell.eval_seconds = std::chrono::duration<double>(t2 - t1).count();

            const std::string stem = cell_stem(cell, tag_dbar);
            io::save_dataset(ds, out_dir + "/datasets/" + stem + ".jsonl");
            nlohmann::json meta;
            meta["method"] = cell.method;
            meta["K"] = K;
            meta["dbar"] = dbar;
            meta["seed"] = seed;
            meta["env_hash"] = env.hash;
            io::save_policy(pol, out_dir + "/policies/" + stem + ".json",
                            meta.dump());
          } catch (const std::exception& e) {
            cell.error = e.what();
          }

          std::printf("[%s K=%d dbar=%.2f seed=%llu] %s\n",
                      cell.method.c_str(), K, dbar,
                      static_cast<unsigned long long>(seed),
                      cell.error.empty()
                          ? ("failure_rate=" +
                             io::format_double(cell.eval.failure_rate))
                                .c_str()
                          : cell.error.c_str());
          std::fflush(stdout);
          result.cells.push_back(std::move(cell));
        }
      }
    }
  }

  result.aggregates = aggregate_cells(result.cells);

  const std::vector<std::string> header = {
      "method",       "K",           "dbar",           "seed",
      "env_hash",     "starts",      "goals",          "collisions",
      "timeouts",     "failure_rate", "safe_cost",     "centerline_msd",
      "final_offset", "min_value_mean", "ds_value_mean", "ds_value_median",
      "ds_value_p10", "start_gate",  "min_start_value", "error"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : result.cells) {
    std::string err = c.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    rows.push_back({c.method,
                    std::to_string(c.K),
                    io::format_double(c.dbar),
                    std::to_string(c.seed),
                    std::to_string(env.hash),
                    std::to_string(c.eval.n),
                    std::to_string(c.eval.goals),
                    std::to_string(c.eval.collisions),
                    std::to_string(c.eval.timeouts),
                    io::format_double(c.eval.failure_rate),
                    io::format_double(c.eval.safe_cost),
                    io::format_double(c.eval.centerline_msd),
                    io::format_double(c.eval.final_offset),
                    io::format_double(c.eval.min_value_mean),
                    io::format_double(c.data_values.mean),
                    io::format_double(c.data_values.median),
                    io::format_double(c.data_values.p10),
                    io::format_double(c.eval.start_value_gate),
                    io::format_double(c.eval.min_start_value),
                    err});
  }
  result.csv_path = out_dir + "/reports/" + name + ".csv";
  io::write_csv(result.csv_path, header, rows);

  io::PlotSpec ps;
  ps.x_col = tag_dbar ? "dbar" : "K";
  ps.group_col = "method";
  ps.title = name;
  for (const std::string y : {"failure_rate", "safe_cost"}) {
    ps.y_col = y;
    const std::string svg = out_dir + "/plots/" + name + "_" + y + ".svg";
    io::plot_svg(result.csv_path, svg, ps);
    result.svg_paths.push_back(svg);
  }
  return result;
}

}  // namespace sgil::bench
