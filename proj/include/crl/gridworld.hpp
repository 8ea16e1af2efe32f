#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crl/common.hpp"
#include "crl/generative.hpp"
#include "crl/mdp.hpp"

#include <nlohmann/json.hpp>

namespace crl {

// Slippery gridworld. Cells are indexed row-major (state = y * width + x),
// actions are 0 up, 1 down, 2 left, 3 right. An action moves to the intended
// neighbor with probability p and to each perpendicular neighbor with
// (1 - p) / 2; the backward cell gets nothing. Moves off the grid redirect
// their mass to staying in place. Rewards are per-cell in raw user scale and
// are collected on the cell the transition lands in.
struct GridSpec {
  int width = 0;
  int height = 0;
  int start_x = 0, start_y = 0;
  int goal_x = 0, goal_y = 0;
  double p = 1.0;
  double gamma = 0.9;
  bool goal_absorbing = true;
  std::vector<double> cell_rewards;      // raw scale, row-major
  std::vector<int> unrewarding_states;   // marked cells for transfer metrics

  int state_of(int x, int y) const { return y * width + x; }
  int start_state() const { return state_of(start_x, start_y); }
  int goal_state() const { return state_of(goal_x, goal_y); }
};

inline void validate_grid(const GridSpec& g) {
  require(g.width > 0 && g.height > 0, "grid dimensions must be positive");
  require(g.p >= 0.0 && g.p <= 1.0, "slip probability must lie in [0, 1]");
  require(g.gamma >= 0.0 && g.gamma < 1.0, "gamma must lie in [0, 1)");
  require(g.start_x >= 0 && g.start_x < g.width && g.start_y >= 0 && g.start_y < g.height,
          "start cell out of range");
  require(g.goal_x >= 0 && g.goal_x < g.width && g.goal_y >= 0 && g.goal_y < g.height,
          "goal cell out of range");
  require(g.cell_rewards.size() == static_cast<size_t>(g.width) * g.height,
          "cell reward table has wrong shape");
  for (int s : g.unrewarding_states)
    require(s >= 0 && s < g.width * g.height, "unrewarding state out of range");
}

inline TabularMDP build_mdp(const GridSpec& g) {
  validate_grid(g);
  const int W = g.width, H = g.height, S = W * H, A = 4;
  const int goal = g.goal_state();
  std::vector<double> trans(static_cast<size_t>(A) * S * S, 0.0);
  auto p_at = [&](int a, int i, int j) -> double& {
    return trans[(static_cast<size_t>(a) * S + i) * S + j];
  };
  const int dx[4] = {0, 0, -1, 1};  // up, down, left, right
  const int dy[4] = {-1, 1, 0, 0};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int s = y * W + x;
      for (int a = 0; a < A; ++a) {
        if (g.goal_absorbing && s == goal) {
          p_at(a, s, s) = 1.0;
          continue;
        }
        auto deposit = [&](int dir, double mass) {
          int nx = x + dx[dir], ny = y + dy[dir];
          int target = (nx < 0 || nx >= W || ny < 0 || ny >= H) ? s : ny * W + nx;
          p_at(a, s, target) += mass;
        };
        deposit(a, g.p);
        // Perpendicular pair: vertical actions slip sideways and vice versa.
        int perp1 = (a < 2) ? 2 : 0;
        int perp2 = (a < 2) ? 3 : 1;
        deposit(perp1, (1.0 - g.p) / 2.0);
        deposit(perp2, (1.0 - g.p) / 2.0);
      }
    }
  }
  std::vector<double> raw(static_cast<size_t>(S) * S * A, 0.0);
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j)
      for (int a = 0; a < A; ++a) {
        double rv = (g.goal_absorbing && i == goal) ? 0.0 : g.cell_rewards[j];
        raw[(static_cast<size_t>(i) * S + j) * A + a] = rv;
      }
  return make_mdp_from_raw(S, A, g.gamma, std::move(trans), raw,
                           /*include_zero=*/g.goal_absorbing);
}

inline SampledModel make_model(const GridSpec& g, uint64_t seed = 0) {
  return SampledModel(build_mdp(g), seed);
}

// Standalone draw using the model's own stream; fixed construction seed gives
// identical sequences.
inline std::pair<int, double> generative_sample(SampledModel& model, int s, int a) {
  return model.sample_own(s, a);
}

// ===== Rollouts ============================================================

inline int default_horizon(double gamma) {
  if (gamma <= 0.0) return 1;
  return static_cast<int>(std::ceil(std::log(1e-8) / std::log(gamma)));
}

struct RolloutStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::vector<double> returns;
  bool degenerate = false;  // fewer than two trajectories
};

// Monte Carlo discounted returns in raw reward scale.
inline RolloutStats rollout(const GenerativeModel& model, const Policy& pi, int start,
                            int horizon, int n_trajectories, Rng& rng) {
  require(start >= 0 && start < model.num_states(), "start state out of range");
  require(horizon >= 1, "horizon must be positive");
  require(n_trajectories >= 1, "need at least one trajectory");
  const TabularMDP& m = model.mdp();
  RolloutStats stats;
  stats.returns.reserve(n_trajectories);
  for (int traj = 0; traj < n_trajectories; ++traj) {
    int s = start;
    double acc = 0.0, discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      double u = rng.next_double();
      int a = m.num_actions - 1;
      double cdf = 0.0;
      for (int k = 0; k < m.num_actions; ++k) {
        cdf += pi.probs(s, k);
        if (u < cdf) {
          a = k;
          break;
        }
      }
      auto [s_next, r_hat] = model.sample(s, a, rng);
      acc += discount * m.raw_reward(r_hat);
      discount *= m.gamma;
      s = s_next;
    }
    stats.returns.push_back(acc);
  }
  double mean = 0.0;
  for (double r : stats.returns) mean += r;
  mean /= stats.returns.size();
  stats.mean = mean;
  if (stats.returns.size() >= 2) {
    double ss = 0.0;
    for (double r : stats.returns) ss += (r - mean) * (r - mean);
    stats.variance = ss / (stats.returns.size() - 1);
  } else {
    stats.degenerate = true;
  }
  return stats;
}

// ===== Presets =============================================================

struct GridPreset {
  GridSpec grid;
  double recommended_c = 0.0;
  double recommended_M = 0.0;
  std::string note;
};

namespace detail {

// Fills a GridSpec from an ASCII map. Glyphs: 'S' start, 'G' goal, '#' deep
// cell, '.' path cell; rewards per glyph are passed in. '#' cells are also
// recorded as the unrewarding set.
inline GridSpec grid_from_ascii(const std::vector<std::string>& rows, double path_reward,
                                double deep_reward, double goal_reward, double p,
                                double gamma, bool goal_absorbing) {
  GridSpec g;
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows[0].size());
  g.p = p;
  g.gamma = gamma;
  g.goal_absorbing = goal_absorbing;
  g.cell_rewards.assign(static_cast<size_t>(g.width) * g.height, path_reward);
  for (int y = 0; y < g.height; ++y) {
    require(static_cast<int>(rows[y].size()) == g.width, "ragged ascii map");
    for (int x = 0; x < g.width; ++x) {
      char ch = rows[y][x];
      int s = y * g.width + x;
      switch (ch) {
        case 'S':
          g.start_x = x;
          g.start_y = y;
          break;
        case 'G':
          g.goal_x = x;
          g.goal_y = y;
          g.cell_rewards[s] = goal_reward;
          break;
        case '#':
          g.cell_rewards[s] = deep_reward;
          g.unrewarding_states.push_back(s);
          break;
        case '.':
          break;
        default:
          throw std::invalid_argument("unknown map glyph");
      }
    }
  }
  return g;
}

}  // namespace detail

// Two-corridor maze: a short middle corridor flanked by penalty bands against
// a slightly longer detour two rows out. Slips on the corridor fall into a
// band, so its returns are high-mean high-variance; the detour is consistent.
// The goal is not absorbing: parking there pays the goal reward every step,
// which keeps route choice meaningful under discounting. Path reward sits
// close to the goal reward so the occupancy reward dispersion is dominated by
// band visits; that makes the variance penalty act as a band-avoidance force
// instead of a uniform drag on long routes.
inline GridPreset maze_variance_preset() {
  std::vector<std::string> rows = {
      "..........",
      "..........",
      "..........",
      "..........",
      "...####...",
      "S........G",
      "...####...",
      "..........",
      "..........",
      "..........",
  };
  GridPreset preset;
  preset.grid = detail::grid_from_ascii(rows, 0.8, -1.0, 1.0, 0.95, 0.9,
                                        /*goal_absorbing=*/false);
  preset.recommended_c = 10.0;
  preset.recommended_M = 10.0;
  preset.note = "two-corridor maze; middle corridor risky, two-row detour safe";
  return preset;
}

// Shared map of the prior-transfer pair: a deep band splits start from goal
// with a passable gap along the top rows.
inline std::vector<std::string> transfer_map() {
  return {
      "..........",
      "..........",
      "....##....",
      "....##....",
      "....##....",
      "....##....",
      "....##....",
      "....##....",
      "....##....",
      "S...##...G",
  };
}

// Source task: heavy slip, deep band strongly negative. The risk-neutral
// policy learned here detours through the top gap; its exact occupancy is the
// transfer prior.
inline GridPreset kl_prior_source_preset() {
  GridPreset preset;
  preset.grid = detail::grid_from_ascii(transfer_map(), 0.3, -5.0, 1.0, 0.4, 0.9,
                                        /*goal_absorbing=*/false);
  preset.recommended_c = 5.0;
  preset.note = "transfer source: p = 0.4, band reward -5";
  return preset;
}

// Drifted task: same map, milder slip, band reward lifted to 0. Risk-neutral
// reoptimization cuts straight through the band; the kl_prior penalty keeps
// the source detour.
inline GridPreset kl_prior_drifted_preset() {
  GridPreset preset;
  preset.grid = detail::grid_from_ascii(transfer_map(), 0.3, 0.0, 1.0, 0.6, 0.9,
                                        /*goal_absorbing=*/false);
  preset.recommended_c = 5.0;
  preset.note = "transfer target: p = 0.6, band reward 0";
  return preset;
}

inline GridPreset builtin_experiments(const std::string& name) {
  if (name == "maze_variance") return maze_variance_preset();
  if (name == "kl_prior_source") return kl_prior_source_preset();
  if (name == "kl_prior_drifted") return kl_prior_drifted_preset();
  throw std::invalid_argument("unknown preset: " + name);
}

// ASCII reward map: S start, G goal, '#' negative, '0' zero, '.' positive.
inline std::string render_grid(const GridSpec& g) {
  std::string out;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      int s = y * g.width + x;
      char ch;
      if (x == g.start_x && y == g.start_y) ch = 'S';
      else if (x == g.goal_x && y == g.goal_y) ch = 'G';
      else if (g.cell_rewards[s] < 0.0) ch = '#';
      else if (g.cell_rewards[s] == 0.0) ch = '0';
      else ch = '.';
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

// ===== Serialization =======================================================

inline nlohmann::json grid_to_json(const GridSpec& g) {
  return nlohmann::json{{"width", g.width},
                        {"height", g.height},
                        {"start", {g.start_x, g.start_y}},
                        {"goal", {g.goal_x, g.goal_y}},
                        {"p", g.p},
                        {"gamma", g.gamma},
                        {"goal_absorbing", g.goal_absorbing},
                        {"cell_rewards", g.cell_rewards},
                        {"unrewarding_states", g.unrewarding_states}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  try {
    if (j.contains("preset")) {
      g = builtin_experiments(j.at("preset").get<std::string>()).grid;
      if (j.contains("p")) g.p = j.at("p").get<double>();
      if (j.contains("gamma")) g.gamma = j.at("gamma").get<double>();
      if (j.contains("goal_absorbing")) g.goal_absorbing = j.at("goal_absorbing").get<bool>();
      validate_grid(g);
      return g;
    }
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.start_x = j.at("start").at(0).get<int>();
    g.start_y = j.at("start").at(1).get<int>();
    g.goal_x = j.at("goal").at(0).get<int>();
    g.goal_y = j.at("goal").at(1).get<int>();
    g.p = j.value("p", 1.0);
    g.gamma = j.value("gamma", 0.9);
    g.goal_absorbing = j.value("goal_absorbing", true);
    g.cell_rewards = j.at("cell_rewards").get<std::vector<double>>();
    g.unrewarding_states = j.value("unrewarding_states", std::vector<int>{});
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid grid config: ") + e.what());
  }
  validate_grid(g);
  return g;
}

}  // namespace crl
