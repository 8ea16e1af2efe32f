#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "crl/common.hpp"
#include "crl/mdp.hpp"

#include <nlohmann/json.hpp>

namespace crl {

// Caution functionals on occupancy measures. All of them are evaluated on the
// normalized measure lambda_hat = (1-gamma) * lambda except the per-job
// barrier and the peak kind, which act on raw returns / visitation weights.
enum class RiskKind {
  none,
  kl_prior,
  variance,
  log_barrier_safety,
  multi_job_barrier,
  peak,
  bca_surrogate,
};

inline const char* risk_kind_name(RiskKind k) {
  switch (k) {
    case RiskKind::none: return "none";
    case RiskKind::kl_prior: return "kl_prior";
    case RiskKind::variance: return "variance";
    case RiskKind::log_barrier_safety: return "log_barrier_safety";
    case RiskKind::multi_job_barrier: return "multi_job_barrier";
    case RiskKind::peak: return "peak";
    case RiskKind::bca_surrogate: return "bca_surrogate";
  }
  return "?";
}

inline double default_floor(int num_states, int num_actions) {
  return std::min(1e-15, 1.0 / (static_cast<double>(num_states) * num_actions));
}

struct RiskSpec {
  RiskKind kind = RiskKind::none;
  double c = 0.0;        // penalty weight in <lambda, r> - c * rho(lambda)
  double gamma = 0.0;
  double floor = 1e-15;  // delta_0, applied inside logarithms only
  double sigma = 0.0;    // subgradient sup-norm bound feeding the schedules

  // kl_prior
  Table prior;           // normalized (s, a) distribution
  Table prior_log;       // log(max(prior, floor)), cached for the hot path
  bool marginalize_states = false;

  // variance and bca_surrogate
  Table reward;          // internal-scale r
  Table second_moment;   // internal-scale R

  // log_barrier_safety
  std::vector<int> safe_states;
  double safety_delta = 0.5;   // requires lambda_hat(safe) > 1 - delta
  double sigma_margin = 0.01;  // margin assumed when bounding the gradient

  // multi_job_barrier
  std::vector<Table> job_rewards;
  std::vector<double> job_thresholds;

  // peak
  std::vector<Table> peak_coeffs;

  // bca_surrogate
  Table mu;
  double bca_M = 0.0;
};

// Discounted visitation of the safe set under the normalized measure.
inline double safety_mass(const OccupancyMeasure& lam, const std::vector<int>& safe_states) {
  double acc = 0.0;
  for (int s : safe_states)
    for (int a = 0; a < lam.values.num_actions; ++a) acc += lam.values(s, a);
  return (1.0 - lam.gamma) * acc;
}

// ===== sigma_default =======================================================

// Worst-case subgradient sup-norm over the feasible set. The barrier kinds
// have no finite bound near the boundary; for them the bound is taken on the
// margin-restricted set {barrier argument >= sigma_margin}.
inline double sigma_default(const RiskSpec& spec) {
  switch (spec.kind) {
    case RiskKind::none:
      return 0.0;
    case RiskKind::kl_prior:
      return (1.0 - spec.gamma) * (1.0 + std::log(1.0 / spec.floor));
    case RiskKind::variance:
      return 3.0 * (1.0 - spec.gamma);
    case RiskKind::log_barrier_safety:
      return (1.0 - spec.gamma) / spec.sigma_margin;
    case RiskKind::multi_job_barrier: {
      double acc = 0.0;
      for (const Table& rj : spec.job_rewards) acc += linf_norm(rj);
      return acc / spec.sigma_margin;
    }
    case RiskKind::peak: {
      double m = 0.0;
      for (const Table& cj : spec.peak_coeffs) m = std::max(m, linf_norm(cj));
      return m;
    }
    case RiskKind::bca_surrogate:
      require(spec.c > 0.0, "surrogate risk undefined at c = 0");
      return (1.0 - spec.gamma) * (1.0 + spec.bca_M / spec.c);
  }
  return 0.0;
}

// ===== Constructors ========================================================

inline RiskSpec risk_none() { return RiskSpec{}; }

inline RiskSpec risk_kl_prior(double c, double gamma, Table prior,
                              bool marginalize_states = false, double floor = -1.0) {
  RiskSpec spec;
  spec.kind = RiskKind::kl_prior;
  spec.c = c;
  spec.gamma = gamma;
  spec.floor = floor > 0.0 ? floor : default_floor(prior.num_states, prior.num_actions);
  require(spec.floor <= 1.0 / (static_cast<double>(prior.num_states) * prior.num_actions),
          "floor must lie in (0, 1/(|S||A|)]");
  double psum = 0.0;
  for (double x : prior.data) {
    require(x >= 0.0, "prior has negative entries");
    psum += x;
  }
  require(std::abs(psum - 1.0) <= 1e-6, "prior must sum to 1");
  spec.prior = std::move(prior);
  spec.marginalize_states = marginalize_states;
  if (marginalize_states) {
    std::vector<double> marg(spec.prior.num_states, 0.0);
    for (int s = 0; s < spec.prior.num_states; ++s)
      for (int a = 0; a < spec.prior.num_actions; ++a) marg[s] += spec.prior(s, a);
    spec.prior_log = Table(spec.prior.num_states, 1, 0.0);
    for (int s = 0; s < spec.prior.num_states; ++s)
      spec.prior_log(s, 0) = std::log(std::max(marg[s], spec.floor));
  } else {
    spec.prior_log = spec.prior;
    for (double& x : spec.prior_log.data) x = std::log(std::max(x, spec.floor));
  }
  spec.sigma = sigma_default(spec);
  return spec;
}

inline RiskSpec risk_variance(double c, const TabularMDP& m) {
  RiskSpec spec;
  spec.kind = RiskKind::variance;
  spec.c = c;
  spec.gamma = m.gamma;
  spec.floor = default_floor(m.num_states, m.num_actions);
  spec.reward = m.expected_reward;
  spec.second_moment = m.second_moment;
  spec.sigma = sigma_default(spec);
  return spec;
}

inline RiskSpec risk_log_barrier_safety(double c, double gamma, std::vector<int> safe_states,
                                        double delta, int num_states, int num_actions,
                                        double sigma_margin = 0.01) {
  RiskSpec spec;
  spec.kind = RiskKind::log_barrier_safety;
  spec.c = c;
  spec.gamma = gamma;
  spec.floor = default_floor(num_states, num_actions);
  require(delta > 0.0 && delta <= 1.0, "safety delta must lie in (0, 1]");
  for (int s : safe_states) require(s >= 0 && s < num_states, "safe state out of range");
  spec.safe_states = std::move(safe_states);
  spec.safety_delta = delta;
  spec.sigma_margin = sigma_margin;
  spec.sigma = sigma_default(spec);
  return spec;
}

inline RiskSpec risk_multi_job_barrier(double c, double gamma, std::vector<Table> job_rewards,
                                       std::vector<double> thresholds, double sigma_margin = 0.01) {
  RiskSpec spec;
  spec.kind = RiskKind::multi_job_barrier;
  spec.c = c;
  spec.gamma = gamma;
  require(!job_rewards.empty() && job_rewards.size() == thresholds.size(),
          "jobs and thresholds must align");
  spec.floor = default_floor(job_rewards[0].num_states, job_rewards[0].num_actions);
  spec.job_rewards = std::move(job_rewards);
  spec.job_thresholds = std::move(thresholds);
  spec.sigma_margin = sigma_margin;
  spec.sigma = sigma_default(spec);
  return spec;
}

inline RiskSpec risk_peak(double c, double gamma, std::vector<Table> coeffs) {
  RiskSpec spec;
  spec.kind = RiskKind::peak;
  spec.c = c;
  spec.gamma = gamma;
  require(!coeffs.empty(), "peak risk needs at least one coefficient table");
  spec.floor = default_floor(coeffs[0].num_states, coeffs[0].num_actions);
  spec.peak_coeffs = std::move(coeffs);
  spec.sigma = sigma_default(spec);
  return spec;
}

// ===== Value and subgradient ===============================================

namespace detail {

inline std::vector<double> state_marginal(const Table& t) {
  std::vector<double> m(t.num_states, 0.0);
  for (int s = 0; s < t.num_states; ++s)
    for (int a = 0; a < t.num_actions; ++a) m[s] += t(s, a);
  return m;
}

}  // namespace detail

inline double risk_value(const RiskSpec& spec, const OccupancyMeasure& lam) {
  const Table& t = lam.values;
  const double one_minus_gamma = 1.0 - spec.gamma;
  switch (spec.kind) {
    case RiskKind::none:
      return 0.0;
    case RiskKind::kl_prior: {
      require(spec.prior.same_shape(t), "prior shape mismatch");
      if (spec.marginalize_states) {
        std::vector<double> m = detail::state_marginal(t);
        double acc = 0.0;
        for (int s = 0; s < t.num_states; ++s) {
          double ms = one_minus_gamma * m[s];
          acc += ms * (std::log(std::max(ms, spec.floor)) - spec.prior_log(s, 0));
        }
        return acc;
      }
      double acc = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i) {
        double lh = one_minus_gamma * t.data[i];
        // The multiplier is never floored: zero mass contributes zero.
        acc += lh * (std::log(std::max(lh, spec.floor)) - spec.prior_log.data[i]);
      }
      return acc;
    }
    case RiskKind::variance: {
      double mean = 0.0, mom2 = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i) {
        double lh = one_minus_gamma * t.data[i];
        mean += lh * spec.reward.data[i];
        mom2 += lh * spec.second_moment.data[i];
      }
      return mom2 - mean * mean;
    }
    case RiskKind::log_barrier_safety: {
      double arg = safety_mass(lam, spec.safe_states) - (1.0 - spec.safety_delta);
      if (arg <= spec.floor) throw std::runtime_error("barrier violated: safety mass too low");
      return -std::log(arg);
    }
    case RiskKind::multi_job_barrier: {
      double acc = 0.0;
      for (size_t jidx = 0; jidx < spec.job_rewards.size(); ++jidx) {
        double arg = dot(t, spec.job_rewards[jidx]) - spec.job_thresholds[jidx];
        if (arg <= spec.floor)
          throw std::runtime_error("barrier violated: job return below threshold");
        acc -= std::log(arg);
      }
      return acc;
    }
    case RiskKind::peak: {
      double best = -std::numeric_limits<double>::infinity();
      for (const Table& cj : spec.peak_coeffs) best = std::max(best, dot(t, cj));
      return best;
    }
    case RiskKind::bca_surrogate: {
      double mean = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i)
        mean += one_minus_gamma * t.data[i] * spec.reward.data[i];
      double mu_r = dot(spec.mu, spec.reward);
      double mu_R = dot(spec.mu, spec.second_moment);
      double prox = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i) {
        double d = one_minus_gamma * t.data[i] - spec.mu.data[i];
        prox += d * d;
      }
      return mean * mean - 2.0 * mu_r * mean + mu_R +
             (spec.bca_M / (2.0 * spec.c)) * prox;
    }
  }
  return 0.0;
}

inline Table risk_subgradient(const RiskSpec& spec, const OccupancyMeasure& lam) {
  const Table& t = lam.values;
  const double one_minus_gamma = 1.0 - spec.gamma;
  Table g(t.num_states, t.num_actions, 0.0);
  switch (spec.kind) {
    case RiskKind::none:
      break;
    case RiskKind::kl_prior: {
      require(spec.prior.same_shape(t), "prior shape mismatch");
      if (spec.marginalize_states) {
        std::vector<double> m = detail::state_marginal(t);
        for (int s = 0; s < t.num_states; ++s) {
          double lh = one_minus_gamma * m[s];
          double gs = one_minus_gamma *
                      (1.0 + std::log(std::max(lh, spec.floor)) - spec.prior_log(s, 0));
          for (int a = 0; a < t.num_actions; ++a) g(s, a) = gs;
        }
      } else {
        for (size_t i = 0; i < t.data.size(); ++i) {
          double lh = one_minus_gamma * t.data[i];
          g.data[i] = one_minus_gamma *
                      (1.0 + std::log(std::max(lh, spec.floor)) - spec.prior_log.data[i]);
        }
      }
      break;
    }
    case RiskKind::variance: {
      double mean = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i)
        mean += one_minus_gamma * t.data[i] * spec.reward.data[i];
      for (size_t i = 0; i < t.data.size(); ++i)
        g.data[i] = one_minus_gamma *
                    (spec.second_moment.data[i] - 2.0 * mean * spec.reward.data[i]);
      break;
    }
    case RiskKind::log_barrier_safety: {
      double arg = safety_mass(lam, spec.safe_states) - (1.0 - spec.safety_delta);
      if (arg <= spec.floor) throw std::runtime_error("barrier violated: safety mass too low");
      for (int s : spec.safe_states)
        for (int a = 0; a < t.num_actions; ++a) g(s, a) = -one_minus_gamma / arg;
      break;
    }
    case RiskKind::multi_job_barrier: {
      for (size_t jidx = 0; jidx < spec.job_rewards.size(); ++jidx) {
        double arg = dot(t, spec.job_rewards[jidx]) - spec.job_thresholds[jidx];
        if (arg <= spec.floor)
          throw std::runtime_error("barrier violated: job return below threshold");
        for (size_t i = 0; i < g.data.size(); ++i)
          g.data[i] -= spec.job_rewards[jidx].data[i] / arg;
      }
      break;
    }
    case RiskKind::peak: {
      // Lowest-index maximizer for a deterministic subgradient choice.
      int best = 0;
      double best_val = dot(t, spec.peak_coeffs[0]);
      for (size_t jidx = 1; jidx < spec.peak_coeffs.size(); ++jidx) {
        double val = dot(t, spec.peak_coeffs[jidx]);
        if (val > best_val) {
          best_val = val;
          best = static_cast<int>(jidx);
        }
      }
      g = spec.peak_coeffs[best];
      break;
    }
    case RiskKind::bca_surrogate: {
      double mean = 0.0;
      for (size_t i = 0; i < t.data.size(); ++i)
        mean += one_minus_gamma * t.data[i] * spec.reward.data[i];
      double mu_r = dot(spec.mu, spec.reward);
      double ratio = spec.bca_M / spec.c;
      for (size_t i = 0; i < t.data.size(); ++i) {
        double lh = one_minus_gamma * t.data[i];
        g.data[i] = one_minus_gamma * (2.0 * (mean - mu_r) * spec.reward.data[i] +
                                       ratio * (lh - spec.mu.data[i]));
      }
      break;
    }
  }
  return g;
}

// L(lambda, v) = <lambda, r> - c rho(lambda) + <xi, v> - <lambda, A^T v>.
// Independent of v on the feasible flow polytope.
inline double lagrangian_value(const TabularMDP& m, const OccupancyMeasure& lam,
                               const ValueVector& v, const RiskSpec& spec,
                               const std::vector<double>& xi) {
  double acc = dot(lam.values, m.expected_reward) - spec.c * risk_value(spec, lam);
  acc += dot(xi, v.values);
  Table atv = flow_adjoint(m, v.values);
  acc -= dot(lam.values, atv);
  return acc;
}

// ===== JSON fragment =======================================================
// {"kind": "...", "c": float, "params": {...}}; tables are flat row-major
// arrays of length |S||A| in the MDP's internal reward scale.

inline RiskSpec risk_from_json(const nlohmann::json& j, const TabularMDP& m) {
  try {
    std::string kind = j.at("kind").get<std::string>();
    double c = j.value("c", 0.0);
    require(c >= 0.0, "risk weight c must be nonnegative");
    nlohmann::json params = j.value("params", nlohmann::json::object());
    const int S = m.num_states, A = m.num_actions;
    auto parse_table = [&](const nlohmann::json& arr) {
      Table t(S, A, 0.0);
      require(static_cast<int>(arr.size()) == S * A, "risk table has wrong length");
      for (int i = 0; i < S * A; ++i) t.data[i] = arr[i].get<double>();
      return t;
    };
    if (kind == "none") {
      RiskSpec spec = risk_none();
      spec.gamma = m.gamma;
      return spec;
    }
    if (kind == "kl_prior") {
      Table prior;
      if (params.contains("prior")) {
        prior = parse_table(params.at("prior"));
      } else if (params.contains("prior_path")) {
        std::ifstream in(params.at("prior_path").get<std::string>());
        require(in.good(), "cannot open prior file");
        nlohmann::json pj;
        in >> pj;
        OccupancyMeasure occ = occupancy_from_json(pj);
        require(occ.values.num_states == S && occ.values.num_actions == A,
                "prior shape mismatch");
        prior = occ.normalized();
      } else {
        throw std::invalid_argument("kl_prior needs prior or prior_path");
      }
      double floor = params.value("floor", -1.0);
      bool marg = params.value("marginalize_states", false);
      return risk_kl_prior(c, m.gamma, std::move(prior), marg, floor);
    }
    if (kind == "variance") return risk_variance(c, m);
    if (kind == "log_barrier_safety") {
      std::vector<int> safe = params.at("safe_states").get<std::vector<int>>();
      double delta = params.value("delta", 0.5);
      double margin = params.value("sigma_margin", 0.01);
      return risk_log_barrier_safety(c, m.gamma, std::move(safe), delta, S, A, margin);
    }
    if (kind == "multi_job_barrier") {
      std::vector<Table> jobs;
      for (const auto& arr : params.at("rewards")) jobs.push_back(parse_table(arr));
      std::vector<double> thresholds = params.at("thresholds").get<std::vector<double>>();
      double margin = params.value("sigma_margin", 0.01);
      return risk_multi_job_barrier(c, m.gamma, std::move(jobs), std::move(thresholds), margin);
    }
    if (kind == "peak") {
      std::vector<Table> coeffs;
      if (params.contains("coeffs")) {
        for (const auto& arr : params.at("coeffs")) coeffs.push_back(parse_table(arr));
      } else if (params.contains("danger_states")) {
        // Sugar: peak discounted visitation of danger sets.
        for (const auto& set : params.at("danger_states")) {
          Table cj(S, A, 0.0);
          for (int s : set.get<std::vector<int>>())
            for (int a = 0; a < A; ++a) cj(s, a) = 1.0 - m.gamma;
          coeffs.push_back(std::move(cj));
        }
      } else {
        throw std::invalid_argument("peak needs coeffs or danger_states");
      }
      return risk_peak(c, m.gamma, std::move(coeffs));
    }
    throw std::invalid_argument("unknown risk kind: " + kind);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid risk fragment: ") + e.what());
  }
}

inline nlohmann::json risk_to_json(const RiskSpec& spec) {
  nlohmann::json j;
  j["kind"] = risk_kind_name(spec.kind);
  j["c"] = spec.c;
  nlohmann::json params = nlohmann::json::object();
  switch (spec.kind) {
    case RiskKind::kl_prior:
      params["prior"] = spec.prior.data;
      params["marginalize_states"] = spec.marginalize_states;
      params["floor"] = spec.floor;
      break;
    case RiskKind::log_barrier_safety:
      params["safe_states"] = spec.safe_states;
      params["delta"] = spec.safety_delta;
      params["sigma_margin"] = spec.sigma_margin;
      break;
    case RiskKind::multi_job_barrier: {
      nlohmann::json arr = nlohmann::json::array();
      for (const Table& t : spec.job_rewards) arr.push_back(t.data);
      params["rewards"] = std::move(arr);
      params["thresholds"] = spec.job_thresholds;
      params["sigma_margin"] = spec.sigma_margin;
      break;
    }
    case RiskKind::peak: {
      nlohmann::json arr = nlohmann::json::array();
      for (const Table& t : spec.peak_coeffs) arr.push_back(t.data);
      params["coeffs"] = std::move(arr);
      break;
    }
    default:
      break;
  }
  j["params"] = std::move(params);
  j["sigma"] = spec.sigma;
  return j;
}

}  // namespace crl
