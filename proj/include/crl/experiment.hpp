#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "crl/baseline.hpp"
#include "crl/bca.hpp"
#include "crl/common.hpp"
#include "crl/generative.hpp"
#include "crl/gridworld.hpp"
#include "crl/mdp.hpp"
#include "crl/risk.hpp"
#include "crl/saddle.hpp"

#include <nlohmann/json.hpp>

namespace crl {

// ===== Formatting and file helpers =========================================

// Shortest decimal that round-trips a double; stable across reruns.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  double back = std::strtod(buf, nullptr);
  if (back == x) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
      if (std::strtod(shorter, nullptr) == x) return shorter;
    }
  }
  return buf;
}

// RFC 4180: quote fields containing separators, quotes, or line breaks.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

class SeriesWriter {
 public:
  // format is "csv" or "json"; the json variant writes an array of objects
  // with the same column names.
  SeriesWriter(const std::filesystem::path& path, std::vector<std::string> columns,
               const std::string& format)
      : columns_(std::move(columns)), json_(format == "json") {
    out_.open(path);
    require(out_.good(), "cannot open output file: " + path.string());
    if (json_) {
      out_ << "[";
    } else {
      for (size_t i = 0; i < columns_.size(); ++i)
        out_ << (i ? "," : "") << csv_field(columns_[i]);
      out_ << "\n";
    }
  }

  // Fields must align with the declared columns; empty string means absent.
  void row(const std::vector<std::string>& fields) {
    require(fields.size() == columns_.size(), "row does not match csv schema");
    if (json_) {
      out_ << (first_ ? "\n" : ",\n") << "  {";
      bool any = false;
      for (size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].empty()) continue;
        out_ << (any ? ", " : "") << '"' << columns_[i] << "\": " << fields[i];
        any = true;
      }
      out_ << "}";
      first_ = false;
    } else {
      for (size_t i = 0; i < fields.size(); ++i)
        out_ << (i ? "," : "") << csv_field(fields[i]);
      out_ << "\n";
    }
  }

  ~SeriesWriter() {
    if (json_) out_ << "\n]\n";
  }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
  bool json_ = false;
  bool first_ = true;
};

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(out.good(), "cannot open output file: " + path.string());
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

// ===== Config plumbing =====================================================

inline SolverConfig solver_from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  cfg.T = j.value("T", static_cast<int64_t>(100000));
  cfg.delta = j.value("delta", 0.1);
  cfg.auto_params = j.value("auto_params", true);
  cfg.alpha = j.value("alpha", 0.0);
  cfg.beta = j.value("beta", 0.0);
  cfg.M1 = j.value("M1", 0.0);
  cfg.M2 = j.value("M2", 0.0);
  cfg.record_every = j.value("record_every", static_cast<int64_t>(0));
  cfg.v_radius = j.value("v_radius", 0.0);
  if (j.contains("xi")) cfg.xi = j.at("xi").get<std::vector<double>>();
  return cfg;
}

inline nlohmann::json solver_to_json(const SolverConfig& cfg, const ScheduleParams& sched,
                                     int64_t resolved_record_every) {
  nlohmann::json j{{"T", cfg.T},
                   {"delta", cfg.delta},
                   {"auto_params", cfg.auto_params},
                   {"alpha", sched.alpha},
                   {"beta", sched.beta},
                   {"M1", sched.M1},
                   {"M2", sched.M2},
                   {"record_every", resolved_record_every}};
  if (cfg.v_radius > 0.0) j["v_radius"] = cfg.v_radius;
  if (!cfg.xi.empty()) j["xi"] = cfg.xi;
  return j;
}

// Environment block: either an inline/preset grid or a path to an MDP file.
struct ResolvedEnv {
  TabularMDP mdp;
  GridSpec grid;
  bool has_grid = false;
};

inline ResolvedEnv resolve_env(const nlohmann::json& cfg) {
  require(cfg.contains("env"), "config needs an env block");
  const auto& env = cfg.at("env");
  ResolvedEnv out;
  if (env.contains("mdp_path")) {
    out.mdp = mdp_from_json(read_json_file(env.at("mdp_path").get<std::string>()));
    return out;
  }
  out.grid = grid_from_json(env);
  out.mdp = build_mdp(out.grid);
  out.has_grid = true;
  return out;
}

inline std::vector<int> seeds_from_json(const nlohmann::json& cfg) {
  std::vector<int> seeds = cfg.value("seeds", std::vector<int>{0});
  require(!seeds.empty(), "seed list must not be empty");
  return seeds;
}

// Seed-level parallelism cap: CAUTIOUS_RL_THREADS when set, otherwise the
// hardware concurrency.
inline int thread_cap() {
  if (const char* env = std::getenv("CAUTIOUS_RL_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1, "invalid CAUTIOUS_RL_THREADS");
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs body(i) for i in [0, n) on at most thread_cap() workers. Results must
// be written to slots indexed by i so merge order never depends on timing.
template <class Body>
inline void parallel_seeds(int n, const Body& body) {
  int workers = std::min(n, thread_cap());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ===== Shared output pieces ================================================

inline std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

inline void write_metrics_series(const std::filesystem::path& path,
                                 const std::vector<MetricsRecord>& metrics,
                                 const std::string& format) {
  // wall_ms deliberately stays out of the series so reruns are byte-identical.
  SeriesWriter w(path, {"t", "objective", "residual_l1", "kl_to_prior", "phi"}, format);
  for (const auto& rec : metrics)
    w.row({std::to_string(rec.t), format_double(rec.objective),
           format_double(rec.residual_l1), opt_field(rec.kl_to_prior), opt_field(rec.phi)});
}

inline void write_returns_series(const std::filesystem::path& path,
                                 const std::vector<double>& returns,
                                 const std::string& format) {
  SeriesWriter w(path, {"trajectory", "return_raw"}, format);
  for (size_t i = 0; i < returns.size(); ++i)
    w.row({std::to_string(i), format_double(returns[i])});
}

inline std::string series_ext(const std::string& format) {
  return format == "json" ? ".json" : ".csv";
}

// Text cells need quoting in the json series variant, numbers do not.
inline std::string text_field(const std::string& s, const std::string& format) {
  return format == "json" ? "\"" + s + "\"" : s;
}

// ===== run_solve ===========================================================

struct SeedOutcome {
  SolveResult result;
  RolloutStats returns;
  double wall_ms = 0.0;
};

// One full stochastic primal-dual experiment: per-seed solves, policy rollouts, metric
// series, and a summary against the exact dual baseline.
inline nlohmann::json run_solve(const nlohmann::json& cfg, const std::string& out_dir) {
  ResolvedEnv env = resolve_env(cfg);
  RiskSpec risk = risk_from_json(cfg.value("risk", nlohmann::json{{"kind", "none"}}), env.mdp);
  SolverConfig base = solver_from_json(cfg.value("solver", nlohmann::json::object()));
  std::vector<int> seeds = seeds_from_json(cfg);
  uint64_t master = cfg.value("seed", 0ull);
  std::string format = cfg.value("format", "csv");
  int rollout_n = cfg.value("rollout", nlohmann::json::object()).value("n", 100);
  int horizon = cfg.value("rollout", nlohmann::json::object()).value("horizon", 0);
  if (horizon <= 0) horizon = default_horizon(env.mdp.gamma);

  std::filesystem::create_directories(out_dir);
  SampledModel model(env.mdp);
  const std::vector<double> xi = base.xi.empty() ? uniform_xi(env.mdp.num_states) : base.xi;
  int start_state = env.has_grid ? env.grid.start_state() : 0;

  std::vector<SeedOutcome> outcomes(seeds.size());
  parallel_seeds(static_cast<int>(seeds.size()), [&](int i) {
    SolverConfig cfg_i = base;
    cfg_i.seed = child_seed(master, 2ull * static_cast<uint64_t>(seeds[i]));
    auto t0 = std::chrono::steady_clock::now();
    outcomes[i].result = solve(model, risk, cfg_i);
    outcomes[i].wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    Rng roll_rng(child_seed(master, 2ull * static_cast<uint64_t>(seeds[i]) + 1));
    outcomes[i].returns =
        rollout(model, outcomes[i].result.policy, start_state, horizon, rollout_n, roll_rng);
  });

  ValueIterationResult baseline = value_iteration(env.mdp, 1e-10);
  double baseline_obj = dot(xi, baseline.v.values);

  nlohmann::json summary;
  summary["seeds"] = seeds;
  summary["baseline_xi_value"] = baseline_obj;
  summary["baseline_xi_value_raw"] = env.mdp.raw_return(baseline_obj);
  nlohmann::json per_seed = nlohmann::json::array();
  double mean_obj = 0.0, mean_resid = 0.0;
  for (size_t i = 0; i < seeds.size(); ++i) {
    const auto& out = outcomes[i];
    const MetricsRecord& last = out.result.metrics.back();
    std::string tag = "_seed" + std::to_string(seeds[i]);
    write_metrics_series(std::filesystem::path(out_dir) / ("metrics" + tag + series_ext(format)),
                         out.result.metrics, format);
    write_returns_series(std::filesystem::path(out_dir) / ("returns" + tag + series_ext(format)),
                         out.returns.returns, format);
    write_json_file(std::filesystem::path(out_dir) / ("occupancy" + tag + ".json"),
                    occupancy_to_json(out.result.lambda_bar));
    write_json_file(std::filesystem::path(out_dir) / ("policy" + tag + ".json"),
                    policy_to_json(out.result.policy));
    per_seed.push_back({{"seed", seeds[i]},
                        {"objective", last.objective},
                        {"residual_l1", last.residual_l1},
                        {"return_mean_raw", out.returns.mean},
                        {"return_variance_raw", out.returns.variance},
                        {"wall_ms", out.wall_ms}});
    mean_obj += last.objective;
    mean_resid += last.residual_l1;
  }
  mean_obj /= seeds.size();
  mean_resid /= seeds.size();
  summary["per_seed"] = std::move(per_seed);
  summary["mean_objective"] = mean_obj;
  summary["mean_residual_l1"] = mean_resid;
  summary["relative_error_vs_baseline"] =
      baseline_obj != 0.0 ? std::abs(mean_obj - baseline_obj) / std::abs(baseline_obj) : 0.0;
  write_json_file(std::filesystem::path(out_dir) / "summary.json", summary);

  ScheduleParams sched =
      base.auto_params
          ? default_parameters(env.mdp.num_states, env.mdp.num_actions, base.T,
                               env.mdp.gamma, risk.c, risk.sigma)
          : ScheduleParams{base.alpha, base.beta, base.M1, base.M2};
  nlohmann::json manifest;
  manifest["subcommand"] = "solve";
  manifest["seed"] = master;
  manifest["seeds"] = seeds;
  manifest["format"] = format;
  manifest["risk"] = risk_to_json(risk);
  manifest["solver"] = solver_to_json(base, sched,
                                      base.record_every > 0 ? base.record_every
                                                            : std::max<int64_t>(1, base.T / 200));
  manifest["rollout"] = {{"n", rollout_n}, {"horizon", horizon}};
  manifest["reward_affine"] = {{"scale", env.mdp.reward_scale},
                               {"offset", env.mdp.reward_offset}};
  if (env.has_grid) manifest["env"] = grid_to_json(env.grid);
  else manifest["env"] = cfg.at("env");
  write_json_file(std::filesystem::path(out_dir) / "manifest.json", manifest);
  return summary;
}

// ===== run_kl_transfer =====================================================

struct TransferSeries {
  std::vector<int64_t> t;
  std::vector<double> return_raw;
  std::vector<double> unrewarding;
};

inline double unrewarding_occupancy(const OccupancyMeasure& lam,
                                    const std::vector<int>& states) {
  double acc = 0.0;
  for (int s : states)
    for (int a = 0; a < lam.values.num_actions; ++a) acc += lam.values(s, a);
  return (1.0 - lam.gamma) * acc;
}

// Prior transfer pipeline: learn risk-neutral behavior on the source task,
// freeze its exact occupancy as the prior, then reoptimize on the drifted
// task with and without the kl_prior penalty.
inline nlohmann::json run_kl_transfer(const nlohmann::json& cfg, const std::string& out_dir) {
  nlohmann::json tr = cfg.value("transfer", nlohmann::json::object());
  GridSpec source = tr.contains("source")
                        ? grid_from_json(tr.at("source"))
                        : builtin_experiments("kl_prior_source").grid;
  GridSpec target = tr.contains("target")
                        ? grid_from_json(tr.at("target"))
                        : builtin_experiments("kl_prior_drifted").grid;
  double c = tr.value("c", builtin_experiments("kl_prior_source").recommended_c);
  SolverConfig source_cfg = solver_from_json(tr.value("source_solver", nlohmann::json::object()));
  SolverConfig target_cfg = solver_from_json(tr.value("target_solver", nlohmann::json::object()));
  std::vector<int> seeds = seeds_from_json(cfg);
  uint64_t master = cfg.value("seed", 0ull);
  std::string format = cfg.value("format", "csv");

  std::filesystem::create_directories(out_dir);
  TabularMDP source_mdp = build_mdp(source);
  TabularMDP target_mdp = build_mdp(target);
  SampledModel source_model(source_mdp);
  SampledModel target_model(target_mdp);
  const std::vector<double> xi = uniform_xi(target_mdp.num_states);
  const std::vector<int>& marked = target.unrewarding_states;

  struct SeedResult {
    TransferSeries kl, neutral;
    OccupancyMeasure prior_occ;
    double final_kl = 0.0, final_neutral = 0.0;
  };
  std::vector<SeedResult> results(seeds.size());

  parallel_seeds(static_cast<int>(seeds.size()), [&](int i) {
    uint64_t base = 4ull * static_cast<uint64_t>(seeds[i]);
    SolverConfig s_cfg = source_cfg;
    s_cfg.seed = child_seed(master, base);
    RiskSpec none = risk_none();
    none.gamma = source_mdp.gamma;
    SolveResult source_run = solve(source_model, none, s_cfg);
    results[i].prior_occ =
        occupancy_from_policy(source_mdp, source_run.policy, uniform_xi(source_mdp.num_states));
    Table prior = results[i].prior_occ.normalized();
    // Exact normalization: the fixed point stops at finite residual.
    double psum = sum(prior);
    for (double& x : prior.data) x /= psum;

    auto run_target = [&](const RiskSpec& risk, uint64_t seed, TransferSeries& series) {
      SolverConfig t_cfg = target_cfg;
      t_cfg.seed = seed;
      auto hook = [&](int64_t t, const OccupancyMeasure& lb, const ValueVector&) {
        series.t.push_back(t);
        series.return_raw.push_back(
            target_mdp.raw_return(dot(lb.values, target_mdp.expected_reward)));
        series.unrewarding.push_back(unrewarding_occupancy(lb, marked));
      };
      solve(target_model, risk, t_cfg, {}, hook);
    };
    RiskSpec kl = risk_kl_prior(c, target_mdp.gamma, prior);
    RiskSpec neutral = risk_none();
    neutral.gamma = target_mdp.gamma;
    run_target(kl, child_seed(master, base + 1), results[i].kl);
    run_target(neutral, child_seed(master, base + 2), results[i].neutral);
    results[i].final_kl = results[i].kl.unrewarding.back();
    results[i].final_neutral = results[i].neutral.unrewarding.back();
  });

  nlohmann::json per_seed = nlohmann::json::array();
  int holds = 0;
  for (size_t i = 0; i < seeds.size(); ++i) {
    std::string tag = "_seed" + std::to_string(seeds[i]);
    for (auto [name, series] :
         {std::pair<const char*, TransferSeries*>{"transfer_kl", &results[i].kl},
          {"transfer_neutral", &results[i].neutral}}) {
      SeriesWriter w(std::filesystem::path(out_dir) / (name + tag + series_ext(format)),
                     {"t", "return_raw", "unrewarding_occupancy"}, format);
      for (size_t k = 0; k < series->t.size(); ++k)
        w.row({std::to_string(series->t[k]), format_double(series->return_raw[k]),
               format_double(series->unrewarding[k])});
    }
    write_json_file(std::filesystem::path(out_dir) / ("prior" + tag + ".json"),
                    occupancy_to_json(results[i].prior_occ));
    bool ok = results[i].final_kl < results[i].final_neutral;
    holds += ok;
    per_seed.push_back({{"seed", seeds[i]},
                        {"final_unrewarding_kl", results[i].final_kl},
                        {"final_unrewarding_neutral", results[i].final_neutral},
                        {"final_return_kl", results[i].kl.return_raw.back()},
                        {"final_return_neutral", results[i].neutral.return_raw.back()},
                        {"kl_below_neutral", ok}});
  }
  nlohmann::json summary;
  summary["per_seed"] = std::move(per_seed);
  summary["seeds_with_kl_below_neutral"] = holds;
  summary["c"] = c;
  write_json_file(std::filesystem::path(out_dir) / "summary.json", summary);

  nlohmann::json manifest;
  manifest["subcommand"] = "kl-transfer";
  manifest["seed"] = master;
  manifest["seeds"] = seeds;
  manifest["format"] = format;
  manifest["c"] = c;
  manifest["source_env"] = grid_to_json(source);
  manifest["target_env"] = grid_to_json(target);
  manifest["source_solver"] = solver_to_json(
      source_cfg,
      default_parameters(source_mdp.num_states, source_mdp.num_actions, source_cfg.T,
                         source_mdp.gamma, 0.0, 0.0),
      source_cfg.record_every > 0 ? source_cfg.record_every
                                  : std::max<int64_t>(1, source_cfg.T / 200));
  manifest["unrewarding_states"] = marked;
  write_json_file(std::filesystem::path(out_dir) / "manifest.json", manifest);
  return summary;
}

// ===== run_bca =============================================================

// Variance-sensitive experiment: block-coordinate ascent against the
// risk-neutral reference on the same maze, compared through rollout returns.
inline nlohmann::json run_bca(const nlohmann::json& cfg, const std::string& out_dir) {
  nlohmann::json bj = cfg.value("bca", nlohmann::json::object());
  GridPreset preset = builtin_experiments(bj.value("preset", std::string("maze_variance")));
  GridSpec grid = cfg.contains("env") && !cfg.at("env").contains("preset")
                      ? grid_from_json(cfg.at("env"))
                      : preset.grid;
  if (cfg.contains("env") && cfg.at("env").contains("preset"))
    grid = grid_from_json(cfg.at("env"));

  BcaConfig base;
  base.K = bj.value("K", 6);
  base.c = bj.value("c", preset.recommended_c);
  base.M = bj.value("M", preset.recommended_M);
  base.compat_projection_constant = bj.value("compat_projection_constant", false);
  base.inner = solver_from_json(bj.value("inner", nlohmann::json::object()));

  SolverConfig neutral_cfg = solver_from_json(cfg.value("solver", nlohmann::json::object()));
  std::vector<int> seeds = seeds_from_json(cfg);
  uint64_t master = cfg.value("seed", 0ull);
  std::string format = cfg.value("format", "csv");
  int rollout_n = cfg.value("rollout", nlohmann::json::object()).value("n", 100);
  int horizon = cfg.value("rollout", nlohmann::json::object()).value("horizon", 0);

  std::filesystem::create_directories(out_dir);
  TabularMDP mdp = build_mdp(grid);
  if (horizon <= 0) horizon = default_horizon(mdp.gamma);
  SampledModel model(mdp);

  struct SeedResult {
    BcaResult bca;
    SolveResult neutral;
    RolloutStats bca_returns, neutral_returns;
    double wall_ms = 0.0;
  };
  std::vector<SeedResult> results(seeds.size());

  parallel_seeds(static_cast<int>(seeds.size()), [&](int i) {
    uint64_t b = 4ull * static_cast<uint64_t>(seeds[i]);
    auto t0 = std::chrono::steady_clock::now();
    BcaConfig cfg_i = base;
    cfg_i.seed = child_seed(master, b);
    results[i].bca = bca_solve(model, cfg_i);
    SolverConfig n_cfg = neutral_cfg;
    if (n_cfg.T == 100000 && cfg_i.inner.T > 0) n_cfg.T = cfg_i.inner.T;
    n_cfg.seed = child_seed(master, b + 1);
    RiskSpec none = risk_none();
    none.gamma = mdp.gamma;
    results[i].neutral = solve(model, none, n_cfg);
    results[i].wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    Policy bca_policy = policy_from_occupancy(results[i].bca.lambda);
    Rng r1(child_seed(master, b + 2));
    results[i].bca_returns =
        rollout(model, bca_policy, grid.start_state(), horizon, rollout_n, r1);
    Rng r2(child_seed(master, b + 3));
    results[i].neutral_returns =
        rollout(model, results[i].neutral.policy, grid.start_state(), horizon, rollout_n, r2);
  });

  nlohmann::json per_seed = nlohmann::json::array();
  for (size_t i = 0; i < seeds.size(); ++i) {
    const SeedResult& r = results[i];
    std::string tag = "_seed" + std::to_string(seeds[i]);
    SeriesWriter w(std::filesystem::path(out_dir) / ("phi" + tag + series_ext(format)),
                   {"k", "phase", "phi"}, format);
    for (size_t k = 0; k < r.bca.phi_after_mu.size(); ++k) {
      w.row({std::to_string(k + 1), text_field("mu", format),
             format_double(r.bca.phi_after_mu[k])});
      w.row({std::to_string(k + 1), text_field("lambda", format),
             format_double(r.bca.phi_after_lambda[k])});
    }
    for (size_t k = 0; k < r.bca.inner.size(); ++k)
      write_metrics_series(std::filesystem::path(out_dir) /
                               ("inner" + tag + "_k" + std::to_string(k + 1) + series_ext(format)),
                           r.bca.inner[k].metrics, format);
    write_returns_series(std::filesystem::path(out_dir) / ("returns_bca" + tag + series_ext(format)),
                         r.bca_returns.returns, format);
    write_returns_series(
        std::filesystem::path(out_dir) / ("returns_neutral" + tag + series_ext(format)),
        r.neutral_returns.returns, format);
    write_json_file(std::filesystem::path(out_dir) / ("occupancy_bca" + tag + ".json"),
                    occupancy_to_json(r.bca.lambda));
    per_seed.push_back({{"seed", seeds[i]},
                        {"k_star", r.bca.k_star},
                        {"bca_return_mean", r.bca_returns.mean},
                        {"bca_return_variance", r.bca_returns.variance},
                        {"neutral_return_mean", r.neutral_returns.mean},
                        {"neutral_return_variance", r.neutral_returns.variance},
                        {"wall_ms", r.wall_ms}});
  }
  nlohmann::json summary;
  summary["per_seed"] = std::move(per_seed);
  write_json_file(std::filesystem::path(out_dir) / "summary.json", summary);

  nlohmann::json manifest;
  manifest["subcommand"] = "bca";
  manifest["seed"] = master;
  manifest["seeds"] = seeds;
  manifest["format"] = format;
  manifest["env"] = grid_to_json(grid);
  manifest["bca"] = {{"K", base.K},
                     {"c", base.c},
                     {"M", base.M > 0.0 ? base.M : base.c},
                     {"compat_projection_constant", base.compat_projection_constant},
                     {"inner_T", base.inner.T > 0
                                     ? base.inner.T
                                     : derive_inner_T(mdp.num_states, mdp.num_actions, mdp.gamma,
                                                      base.c, base.M > 0.0 ? base.M : base.c)}};
  manifest["rollout"] = {{"n", rollout_n}, {"horizon", horizon}};
  write_json_file(std::filesystem::path(out_dir) / "manifest.json", manifest);
  return summary;
}

}  // namespace crl
