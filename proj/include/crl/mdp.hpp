#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "crl/common.hpp"

#include <nlohmann/json.hpp>

namespace crl {

// ===== Core types ==========================================================

// Finite discounted MDP. Transitions are row-stochastic per action, rewards
// live on transitions (i, j, a) and are kept in [0, 1] internally; the affine
// map back to the user's raw scale is recorded as raw = scale * internal +
// offset.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  double gamma = 0.0;

  // P_a(i, j) at index (a * S + i) * S + j.
  std::vector<double> transitions;
  // r_hat_{ija} at index (i * S + j) * A + a; empty when only expected
  // rewards are known.
  std::vector<double> transition_rewards;
  // Expected reward r(s, a) = sum_j P_a(s, j) r_hat_{sja}.
  Table expected_reward;
  // Second moment R(s, a) = sum_j P_a(s, j) r_hat_{sja}^2.
  Table second_moment;

  double reward_scale = 1.0;   // raw = reward_scale * internal + reward_offset
  double reward_offset = 0.0;

  double p(int a, int i, int j) const {
    return transitions[(static_cast<size_t>(a) * num_states + i) * num_states + j];
  }
  double& p(int a, int i, int j) {
    return transitions[(static_cast<size_t>(a) * num_states + i) * num_states + j];
  }
  const double* row(int a, int i) const {
    return &transitions[(static_cast<size_t>(a) * num_states + i) * num_states];
  }
  double r_hat(int i, int j, int a) const {
    return transition_rewards[(static_cast<size_t>(i) * num_states + j) * num_actions + a];
  }
  double& r_hat(int i, int j, int a) {
    return transition_rewards[(static_cast<size_t>(i) * num_states + j) * num_actions + a];
  }
  bool has_transition_rewards() const { return !transition_rewards.empty(); }

  double raw_reward(double internal) const { return reward_scale * internal + reward_offset; }
  // Expected discounted raw return of an occupancy-weighted reward sum:
  // every step also collects the offset, whose discounted mass is 1/(1-gamma).
  double raw_return(double internal_return) const {
    return reward_scale * internal_return + reward_offset / (1.0 - gamma);
  }
};

// Discounted state-action occupancy. Feasible iterates have nonnegative
// entries and total mass 1/(1-gamma); lambda_hat = (1-gamma) * values is the
// normalized distribution used by the risk functionals.
struct OccupancyMeasure {
  Table values;
  double gamma = 0.0;

  double mass() const { return sum(values); }
  Table normalized() const {
    Table t = values;
    for (double& x : t.data) x *= (1.0 - gamma);
    return t;
  }
};

struct ValueVector {
  std::vector<double> values;
};

// Rows are conditional distributions pi(a|s).
struct Policy {
  Table probs;
};

// ===== Validation ==========================================================

inline void validate_mdp(const TabularMDP& m, double tol = 1e-9) {
  require(m.num_states > 0 && m.num_actions > 0, "MDP must have positive dimensions");
  require(m.gamma >= 0.0 && m.gamma < 1.0, "gamma must lie in [0, 1)");
  require(m.transitions.size() ==
              static_cast<size_t>(m.num_actions) * m.num_states * m.num_states,
          "transition table has wrong shape");
  for (int a = 0; a < m.num_actions; ++a) {
    for (int i = 0; i < m.num_states; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < m.num_states; ++j) {
        double pij = m.p(a, i, j);
        require(pij >= -tol, "negative transition probability");
        row_sum += pij;
      }
      require(std::abs(row_sum - 1.0) <= tol, "transition row does not sum to 1");
    }
  }
  if (m.has_transition_rewards()) {
    require(m.transition_rewards.size() ==
                static_cast<size_t>(m.num_states) * m.num_states * m.num_actions,
            "transition reward table has wrong shape");
    for (int i = 0; i < m.num_states; ++i)
      for (int j = 0; j < m.num_states; ++j)
        for (int a = 0; a < m.num_actions; ++a)
          if (m.p(a, i, j) > 0.0)
            require(m.r_hat(i, j, a) >= -tol && m.r_hat(i, j, a) <= 1.0 + tol,
                    "internal rewards must lie in [0, 1]");
  }
  require(m.expected_reward.num_states == m.num_states &&
              m.expected_reward.num_actions == m.num_actions,
          "expected reward table has wrong shape");
  for (double r : m.expected_reward.data)
    require(r >= -tol && r <= 1.0 + tol, "internal rewards must lie in [0, 1]");
}

inline bool occupancy_feasible(const OccupancyMeasure& lam, double mass_tol = 1e-9) {
  for (double x : lam.values.data)
    if (x < 0.0) return false;
  return std::abs(lam.mass() - 1.0 / (1.0 - lam.gamma)) <= mass_tol;
}

// ===== Construction ========================================================

// Recomputes expected rewards and second moments from the per-transition
// table. Call after any edit to transitions or transition_rewards.
inline void refresh_reward_moments(TabularMDP& m) {
  require(m.has_transition_rewards(), "no transition rewards");
  m.expected_reward = Table(m.num_states, m.num_actions, 0.0);
  m.second_moment = Table(m.num_states, m.num_actions, 0.0);
  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < m.num_actions; ++a) {
      double mean = 0.0, mom2 = 0.0;
      for (int j = 0; j < m.num_states; ++j) {
        double pj = m.p(a, s, j);
        if (pj == 0.0) continue;
        double rv = m.r_hat(s, j, a);
        mean += pj * rv;
        mom2 += pj * rv * rv;
      }
      m.expected_reward(s, a) = mean;
      m.second_moment(s, a) = mom2;
    }
  }
}

// Builds an MDP from raw-scale per-transition rewards. Raw rewards are mapped
// affinely onto [0, 1]; if include_zero is set the map's range is widened to
// cover raw 0 (needed when absorbing self-loops pay raw 0). Rewards already
// inside [0, 1] are left untouched.
inline TabularMDP make_mdp_from_raw(int num_states, int num_actions, double gamma,
                                    std::vector<double> transitions,
                                    const std::vector<double>& raw_transition_rewards,
                                    bool include_zero = false) {
  TabularMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  m.transitions = std::move(transitions);

  double lo = include_zero ? 0.0 : std::numeric_limits<double>::infinity();
  double hi = include_zero ? 0.0 : -std::numeric_limits<double>::infinity();
  for (int i = 0; i < num_states; ++i)
    for (int j = 0; j < num_states; ++j)
      for (int a = 0; a < num_actions; ++a)
        if (m.p(a, i, j) > 0.0) {
          double rv = raw_transition_rewards[(static_cast<size_t>(i) * num_states + j) *
                                                 num_actions +
                                             a];
          lo = std::min(lo, rv);
          hi = std::max(hi, rv);
        }
  double scale, offset;
  if (lo >= 0.0 && hi <= 1.0) {
    scale = 1.0;
    offset = 0.0;
  } else if (hi > lo) {
    scale = hi - lo;  // internal = (raw - lo) / (hi - lo)
    offset = lo;
  } else {
    scale = 1.0;      // constant rewards: shift onto 0.5
    offset = lo - 0.5;
  }
  m.reward_scale = scale;
  m.reward_offset = offset;
  m.transition_rewards.resize(raw_transition_rewards.size());
  for (size_t k = 0; k < raw_transition_rewards.size(); ++k)
    m.transition_rewards[k] = (raw_transition_rewards[k] - offset) / scale;
  refresh_reward_moments(m);
  validate_mdp(m);
  return m;
}

// ===== Operations ==========================================================

inline Table expected_reward_table(const TabularMDP& m) {
  require(m.has_transition_rewards(), "no transition rewards");
  Table r(m.num_states, m.num_actions, 0.0);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) {
      double acc = 0.0;
      for (int j = 0; j < m.num_states; ++j) acc += m.p(a, s, j) * m.r_hat(s, j, a);
      r(s, a) = acc;
    }
  return r;
}

// Conditional policy pi(a|s) = lambda_sa / sum_a' lambda_sa'. States with no
// occupancy mass fall back to uniform.
inline Policy policy_from_occupancy(const OccupancyMeasure& lam) {
  const Table& t = lam.values;
  Policy pi;
  pi.probs = Table(t.num_states, t.num_actions, 0.0);
  for (int s = 0; s < t.num_states; ++s) {
    double row = 0.0;
    for (int a = 0; a < t.num_actions; ++a) row += t(s, a);
    if (row > 0.0) {
      for (int a = 0; a < t.num_actions; ++a) pi.probs(s, a) = t(s, a) / row;
    } else {
      for (int a = 0; a < t.num_actions; ++a) pi.probs(s, a) = 1.0 / t.num_actions;
    }
  }
  return pi;
}

// Occupancy of a fixed policy: the fixed point of lambda <- xi_hat + gamma *
// P_pi^T lambda over state-action space, iterated until the l1 residual drops
// below tol. Geometric contraction with rate gamma.
inline OccupancyMeasure occupancy_from_policy(const TabularMDP& m, const Policy& pi,
                                              const std::vector<double>& xi,
                                              double tol = 1e-10) {
  require(static_cast<int>(xi.size()) == m.num_states, "xi has wrong length");
  double xi_sum = 0.0;
  for (double x : xi) {
    require(x >= 0.0, "invalid initial distribution");
    xi_sum += x;
  }
  require(std::abs(xi_sum - 1.0) <= 1e-9, "invalid initial distribution");

  const int S = m.num_states, A = m.num_actions;
  Table lam(S, A, 0.0), next(S, A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) lam(s, a) = xi[s] * pi.probs(s, a);

  std::vector<double> state_in(S, 0.0);
  for (int iter = 0;; ++iter) {
    // state_in(j) = sum_{s,a} lambda(s,a) P_a(s,j)
    std::fill(state_in.begin(), state_in.end(), 0.0);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double w = lam(s, a);
        if (w == 0.0) continue;
        const double* row = m.row(a, s);
        for (int j = 0; j < S; ++j) state_in[j] += w * row[j];
      }
    double resid = 0.0;
    for (int j = 0; j < S; ++j)
      for (int a = 0; a < A; ++a) {
        next(j, a) = xi[j] * pi.probs(j, a) + m.gamma * pi.probs(j, a) * state_in[j];
        resid += std::abs(next(j, a) - lam(j, a));
      }
    lam.data.swap(next.data);
    if (resid <= tol) break;
    if (iter > 200000) throw std::runtime_error("occupancy_from_policy did not converge");
  }
  return OccupancyMeasure{lam, m.gamma};
}

// Flow vector (A lambda)(j) = sum_a lambda_ja - gamma * sum_{s,a} P_a(s,j)
// lambda_sa; the LP constraint is A lambda = xi.
inline std::vector<double> flow_vector(const TabularMDP& m, const Table& lam) {
  const int S = m.num_states, A = m.num_actions;
  std::vector<double> out(S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double w = lam(s, a);
      out[s] += w;
      if (w == 0.0) continue;
      const double* row = m.row(a, s);
      for (int j = 0; j < S; ++j) out[j] -= m.gamma * w * row[j];
    }
  return out;
}

// (A^T y)(s, a) = y_s - gamma * sum_j P_a(s, j) y_j.
inline Table flow_adjoint(const TabularMDP& m, const std::vector<double>& y) {
  const int S = m.num_states, A = m.num_actions;
  Table out(S, A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double* row = m.row(a, s);
      double acc = 0.0;
      for (int j = 0; j < S; ++j) acc += row[j] * y[j];
      out(s, a) = y[s] - m.gamma * acc;
    }
  return out;
}

inline double constraint_residual(const TabularMDP& m, const OccupancyMeasure& lam,
                                  const std::vector<double>& xi) {
  std::vector<double> flow = flow_vector(m, lam.values);
  double resid = 0.0;
  for (int s = 0; s < m.num_states; ++s) resid += std::abs(flow[s] - xi[s]);
  return resid;
}

inline double return_of_occupancy(const OccupancyMeasure& lam, const Table& reward) {
  return dot(lam.values, reward);
}

inline std::vector<double> uniform_xi(int num_states) {
  return std::vector<double>(num_states, 1.0 / num_states);
}

// ===== Serialization =======================================================
// Doubles round-trip exactly through nlohmann's shortest-representation
// output, which always carries at least 15 significant digits when needed.

inline nlohmann::json mdp_to_json(const TabularMDP& m) {
  nlohmann::json j;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["gamma"] = m.gamma;
  auto& trans = j["transitions"] = nlohmann::json::array();
  for (int a = 0; a < m.num_actions; ++a) {
    nlohmann::json mat = nlohmann::json::array();
    for (int i = 0; i < m.num_states; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int jj = 0; jj < m.num_states; ++jj) row.push_back(m.p(a, i, jj));
      mat.push_back(std::move(row));
    }
    trans.push_back(std::move(mat));
  }
  if (m.has_transition_rewards()) {
    nlohmann::json per = nlohmann::json::array();
    for (int i = 0; i < m.num_states; ++i) {
      nlohmann::json mid = nlohmann::json::array();
      for (int jj = 0; jj < m.num_states; ++jj) {
        nlohmann::json inner = nlohmann::json::array();
        for (int a = 0; a < m.num_actions; ++a) inner.push_back(m.r_hat(i, jj, a));
        mid.push_back(std::move(inner));
      }
      per.push_back(std::move(mid));
    }
    j["rewards"] = {{"per_transition", std::move(per)}};
  } else {
    nlohmann::json exp = nlohmann::json::array();
    for (int s = 0; s < m.num_states; ++s) {
      nlohmann::json row = nlohmann::json::array();
      for (int a = 0; a < m.num_actions; ++a) row.push_back(m.expected_reward(s, a));
      exp.push_back(std::move(row));
    }
    j["rewards"] = {{"expected", std::move(exp)}};
  }
  if (m.reward_scale != 1.0 || m.reward_offset != 0.0)
    j["reward_affine"] = {{"scale", m.reward_scale}, {"offset", m.reward_offset}};
  return j;
}

inline TabularMDP mdp_from_json(const nlohmann::json& j) {
  TabularMDP m;
  try {
    m.num_states = j.at("num_states").get<int>();
    m.num_actions = j.at("num_actions").get<int>();
    m.gamma = j.at("gamma").get<double>();
    require(m.num_states > 0 && m.num_actions > 0, "invalid MDP file: bad dimensions");
    const int S = m.num_states, A = m.num_actions;
    const auto& trans = j.at("transitions");
    require(static_cast<int>(trans.size()) == A, "invalid MDP file: transitions shape");
    m.transitions.assign(static_cast<size_t>(A) * S * S, 0.0);
    for (int a = 0; a < A; ++a) {
      require(static_cast<int>(trans[a].size()) == S, "invalid MDP file: transitions shape");
      for (int i = 0; i < S; ++i) {
        require(static_cast<int>(trans[a][i].size()) == S,
                "invalid MDP file: transitions shape");
        for (int jj = 0; jj < S; ++jj) m.p(a, i, jj) = trans[a][i][jj].get<double>();
      }
    }
    const auto& rew = j.at("rewards");
    if (rew.contains("per_transition")) {
      const auto& per = rew.at("per_transition");
      require(static_cast<int>(per.size()) == S, "invalid MDP file: rewards shape");
      m.transition_rewards.assign(static_cast<size_t>(S) * S * A, 0.0);
      for (int i = 0; i < S; ++i) {
        require(static_cast<int>(per[i].size()) == S, "invalid MDP file: rewards shape");
        for (int jj = 0; jj < S; ++jj) {
          require(static_cast<int>(per[i][jj].size()) == A,
                  "invalid MDP file: rewards shape");
          for (int a = 0; a < A; ++a) m.r_hat(i, jj, a) = per[i][jj][a].get<double>();
        }
      }
      refresh_reward_moments(m);
    } else if (rew.contains("expected")) {
      const auto& exp = rew.at("expected");
      require(static_cast<int>(exp.size()) == S, "invalid MDP file: rewards shape");
      m.expected_reward = Table(S, A, 0.0);
      m.second_moment = Table(S, A, 0.0);
      for (int s = 0; s < S; ++s) {
        require(static_cast<int>(exp[s].size()) == A, "invalid MDP file: rewards shape");
        for (int a = 0; a < A; ++a) {
          double rv = exp[s][a].get<double>();
          m.expected_reward(s, a) = rv;
          // Reward treated as deterministic given (s, a) when only expected
          // values are known.
          m.second_moment(s, a) = rv * rv;
        }
      }
    } else {
      throw std::invalid_argument("invalid MDP file: rewards must be expected or per_transition");
    }
    if (j.contains("reward_affine")) {
      m.reward_scale = j.at("reward_affine").at("scale").get<double>();
      m.reward_offset = j.at("reward_affine").at("offset").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid MDP file: ") + e.what());
  }
  validate_mdp(m);
  for (double rv : m.expected_reward.data)
    require(rv >= -1e-9 && rv <= 1.0 + 1e-9, "invalid MDP file: rewards must lie in [0, 1]");
  return m;
}

inline nlohmann::json occupancy_to_json(const OccupancyMeasure& lam) {
  return nlohmann::json{{"num_states", lam.values.num_states},
                        {"num_actions", lam.values.num_actions},
                        {"gamma", lam.gamma},
                        {"values", lam.values.data}};
}

inline OccupancyMeasure occupancy_from_json(const nlohmann::json& j) {
  OccupancyMeasure lam;
  try {
    lam.values.num_states = j.at("num_states").get<int>();
    lam.values.num_actions = j.at("num_actions").get<int>();
    lam.gamma = j.at("gamma").get<double>();
    lam.values.data = j.at("values").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid occupancy file: ") + e.what());
  }
  require(lam.values.data.size() ==
              static_cast<size_t>(lam.values.num_states) * lam.values.num_actions,
          "invalid occupancy file: values shape");
  return lam;
}

inline nlohmann::json policy_to_json(const Policy& pi) {
  return nlohmann::json{{"num_states", pi.probs.num_states},
                        {"num_actions", pi.probs.num_actions},
                        {"probs", pi.probs.data}};
}

inline Policy policy_from_json(const nlohmann::json& j) {
  Policy pi;
  try {
    pi.probs.num_states = j.at("num_states").get<int>();
    pi.probs.num_actions = j.at("num_actions").get<int>();
    pi.probs.data = j.at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid policy file: ") + e.what());
  }
  require(pi.probs.data.size() ==
              static_cast<size_t>(pi.probs.num_states) * pi.probs.num_actions,
          "invalid policy file: probs shape");
  for (int s = 0; s < pi.probs.num_states; ++s) {
    double row = 0.0;
    for (int a = 0; a < pi.probs.num_actions; ++a) {
      require(pi.probs(s, a) >= -1e-12, "invalid policy file: negative probability");
      row += pi.probs(s, a);
    }
    require(std::abs(row - 1.0) <= 1e-9, "invalid policy file: row does not sum to 1");
  }
  return pi;
}

}  // namespace crl
