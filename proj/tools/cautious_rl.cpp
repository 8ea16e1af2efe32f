// Command-line front end for the cautious policy optimization toolkit.
//
// Subcommands:
//   solve        stochastic primal-dual run with metric series and rollouts
//   bca          block-coordinate ascent on the variance-penalized objective
//   kl-transfer  prior-transfer pipeline (source run, frozen prior, drifted task)
//   baseline     exact risk-neutral baseline via value iteration
//   oracle       exact penalized solve with KKT diagnostics
//   rollout      Monte Carlo returns of a stored policy
//   gridworld    materialize or render a grid environment
//
// Exit codes: 0 success, 2 bad config or arguments, 3 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crl/experiment.hpp"

namespace {

using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::string seeds_expr;
  std::string format;
  int64_t seed = -1;
};

// Accepts "3", "0,2,5", and "0..9" (inclusive), in any comma-separated mix.
std::vector<int> parse_seed_expr(const std::string& expr) {
  std::vector<int> seeds;
  size_t pos = 0;
  while (pos <= expr.size()) {
    size_t comma = expr.find(',', pos);
    std::string tok = expr.substr(pos, comma == std::string::npos ? comma : comma - pos);
    crl::require(!tok.empty(), "empty entry in seed list");
    size_t dots = tok.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(std::stoi(tok));
    } else {
      int lo = std::stoi(tok.substr(0, dots));
      int hi = std::stoi(tok.substr(dots + 2));
      crl::require(lo <= hi, "seed range must be ascending: " + tok);
      for (int s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

json load_config(const CommonArgs& args, bool required) {
  json cfg = json::object();
  if (!args.config_path.empty()) cfg = crl::read_json_file(args.config_path);
  else crl::require(!required, "this subcommand needs --config");
  if (!args.seeds_expr.empty()) cfg["seeds"] = parse_seed_expr(args.seeds_expr);
  if (!args.format.empty()) {
    crl::require(args.format == "csv" || args.format == "json",
                 "format must be csv or json");
    cfg["format"] = args.format;
  }
  if (args.seed >= 0) cfg["seed"] = static_cast<uint64_t>(args.seed);
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args, bool needs_out) {
  sub->add_option("--config", args.config_path, "experiment config (json)");
  auto* out = sub->add_option("--out", args.out, "output directory");
  if (needs_out) out->required();
  sub->add_option("--seeds", args.seeds_expr, "seed list, e.g. 0..9 or 0,3,7");
  sub->add_option("--format", args.format, "series format: csv (default) or json");
  sub->add_option("--seed", args.seed, "master seed (overrides config)");
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) std::cout << j.dump(2) << "\n";
  else crl::write_json_file(out_path, j);
}

int run(int argc, char** argv) {
  CLI::App app{"cautious_rl: risk-penalized tabular policy optimization"};
  app.require_subcommand(1);

  CommonArgs solve_args, bca_args, transfer_args;
  CommonArgs baseline_args, oracle_args, rollout_args, grid_args;

  auto* solve_cmd = app.add_subcommand("solve", "stochastic primal-dual experiment");
  add_common(solve_cmd, solve_args, true);

  auto* bca_cmd = app.add_subcommand("bca", "block-coordinate ascent experiment");
  add_common(bca_cmd, bca_args, true);

  auto* transfer_cmd = app.add_subcommand("kl-transfer", "prior transfer experiment");
  add_common(transfer_cmd, transfer_args, true);

  auto* baseline_cmd = app.add_subcommand("baseline", "exact risk-neutral baseline");
  add_common(baseline_cmd, baseline_args, false);

  auto* oracle_cmd = app.add_subcommand("oracle", "exact penalized solve with diagnostics");
  add_common(oracle_cmd, oracle_args, false);

  auto* rollout_cmd = app.add_subcommand("rollout", "Monte Carlo returns of a policy");
  add_common(rollout_cmd, rollout_args, false);
  std::string policy_path;
  int rollout_n = 100, rollout_horizon = 0, rollout_start = -1;
  rollout_cmd->add_option("--policy", policy_path, "policy file (json)")->required();
  rollout_cmd->add_option("--n", rollout_n, "number of trajectories");
  rollout_cmd->add_option("--horizon", rollout_horizon, "truncation horizon");
  rollout_cmd->add_option("--start", rollout_start, "start state (default: grid start)");

  auto* grid_cmd = app.add_subcommand("gridworld", "materialize or render a grid");
  add_common(grid_cmd, grid_args, false);
  std::string grid_preset;
  bool grid_render = false;
  grid_cmd->add_option("--preset", grid_preset, "built-in map name");
  grid_cmd->add_flag("--render", grid_render, "print the map to stdout");

  CLI11_PARSE(app, argc, argv);

  if (solve_cmd->parsed()) {
    crl::run_solve(load_config(solve_args, true), solve_args.out);
    std::cout << "wrote " << solve_args.out << "/summary.json\n";
  } else if (bca_cmd->parsed()) {
    crl::run_bca(load_config(bca_args, true), bca_args.out);
    std::cout << "wrote " << bca_args.out << "/summary.json\n";
  } else if (transfer_cmd->parsed()) {
    crl::run_kl_transfer(load_config(transfer_args, true), transfer_args.out);
    std::cout << "wrote " << transfer_args.out << "/summary.json\n";
  } else if (baseline_cmd->parsed()) {
    json cfg = load_config(baseline_args, true);
    crl::ResolvedEnv env = crl::resolve_env(cfg);
    crl::ValueIterationResult vi = crl::value_iteration(env.mdp);
    std::vector<double> xi = crl::uniform_xi(env.mdp.num_states);
    double val = crl::dot(xi, vi.v.values);
    json out{{"xi_value", val},
             {"xi_value_raw", env.mdp.raw_return(val)},
             {"v", vi.v.values},
             {"iterations", vi.iterations},
             {"policy", crl::policy_to_json(vi.greedy)}};
    emit(out, baseline_args.out);
  } else if (oracle_cmd->parsed()) {
    json cfg = load_config(oracle_args, true);
    crl::ResolvedEnv env = crl::resolve_env(cfg);
    crl::RiskSpec risk =
        crl::risk_from_json(cfg.value("risk", json{{"kind", "none"}}), env.mdp);
    std::vector<double> xi = crl::uniform_xi(env.mdp.num_states);
    crl::OracleReport rep = crl::exact_cautious_solve(env.mdp, risk, xi);
    json out{{"objective", rep.objective},
             {"objective_raw", env.mdp.raw_return(rep.objective)},
             {"residual_l1", rep.residual_l1},
             {"kkt_residual", rep.kkt},
             {"stationarity", rep.stationarity},
             {"converged", rep.converged},
             {"outer_iterations", rep.outer_iterations},
             {"occupancy", crl::occupancy_to_json(rep.lambda)},
             {"v", rep.v.values},
             {"risk", crl::risk_to_json(risk)}};
    emit(out, oracle_args.out);
  } else if (rollout_cmd->parsed()) {
    json cfg = load_config(rollout_args, true);
    crl::ResolvedEnv env = crl::resolve_env(cfg);
    crl::Policy pi = crl::policy_from_json(crl::read_json_file(policy_path));
    int start = rollout_start >= 0 ? rollout_start
                                   : (env.has_grid ? env.grid.start_state() : 0);
    int horizon = rollout_horizon > 0 ? rollout_horizon : crl::default_horizon(env.mdp.gamma);
    crl::SampledModel model(env.mdp);
    uint64_t master = cfg.value("seed", 0ull);
    crl::Rng rng(crl::child_seed(master, 1));
    crl::RolloutStats stats = crl::rollout(model, pi, start, horizon, rollout_n, rng);
    json out{{"mean_raw", stats.mean},
             {"variance_raw", stats.variance},
             {"n", rollout_n},
             {"horizon", horizon},
             {"start", start},
             {"degenerate", stats.degenerate},
             {"returns", stats.returns}};
    emit(out, rollout_args.out);
  } else if (grid_cmd->parsed()) {
    json cfg = grid_preset.empty() ? load_config(grid_args, true)
                                   : json{{"env", {{"preset", grid_preset}}}};
    if (!grid_args.config_path.empty() && !grid_preset.empty())
      cfg = load_config(grid_args, true);
    crl::require(cfg.contains("env"), "config needs an env block");
    crl::GridSpec grid = crl::grid_from_json(cfg.at("env"));
    if (grid_render) std::cout << crl::render_grid(grid);
    if (!grid_args.out.empty() || !grid_render) {
      crl::TabularMDP mdp = crl::build_mdp(grid);
      emit(crl::mdp_to_json(mdp), grid_args.out);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
