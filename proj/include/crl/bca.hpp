#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "crl/common.hpp"
#include "crl/generative.hpp"
#include "crl/mdp.hpp"
#include "crl/risk.hpp"
#include "crl/saddle.hpp"

namespace crl {

// Auxiliary distribution of the variance surrogate; a member of the
// probability simplex over (s, a).
struct AuxiliaryDistribution {
  Table values;
};

struct BcaConfig {
  int K = 8;            // outer block iterations
  double c = 1.0;       // variance penalty weight, must be positive
  double M = -1.0;      // proximal weight; nonpositive selects the default M = c
  bool compat_projection_constant = false;  // 2/M prefactor instead of c/M
  SolverConfig inner;   // inner solver; inner.T == 0 derives a desk-size schedule
  uint64_t seed = 0;
};

// Euclidean projection onto the probability simplex (sort and threshold).
inline std::vector<double> project_simplex(const std::vector<double>& x) {
  const size_t n = x.size();
  require(n > 0, "cannot project an empty vector");
  std::vector<double> u(x);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  double running = 0.0;
  for (size_t k = 1; k <= n; ++k) {
    running += u[k - 1];
    double t = (running - 1.0) / static_cast<double>(k);
    if (u[k - 1] - t > 0.0) {
      rho = static_cast<int>(k);
      css = running;
    }
  }
  theta = (1.0 - css) / static_cast<double>(rho);
  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = std::max(x[i] + theta, 0.0);
  return y;
}

inline Table project_simplex(const Table& x) {
  Table out = x;
  out.data = project_simplex(x.data);
  return out;
}

// Linearized surrogate of the variance-penalized objective:
// Phi(lambda, mu) = <lambda, r> - c(<lh, r>^2 - 2<mu, r><lh, r> + <mu, R>)
//                   - (M/2) ||mu - lh||^2,     lh = (1-gamma) lambda.
inline double surrogate_value(const OccupancyMeasure& lam, const AuxiliaryDistribution& mu,
                              const Table& reward, const Table& second_moment, double c,
                              double M) {
  const double one_minus_gamma = 1.0 - lam.gamma;
  double lin = 0.0, lh_r = 0.0;
  for (size_t i = 0; i < lam.values.data.size(); ++i) {
    lin += lam.values.data[i] * reward.data[i];
    lh_r += one_minus_gamma * lam.values.data[i] * reward.data[i];
  }
  double mu_r = dot(mu.values, reward);
  double mu_R = dot(mu.values, second_moment);
  double prox = 0.0;
  for (size_t i = 0; i < lam.values.data.size(); ++i) {
    double d = mu.values.data[i] - one_minus_gamma * lam.values.data[i];
    prox += d * d;
  }
  return lin - c * (lh_r * lh_r - 2.0 * mu_r * lh_r + mu_R) - 0.5 * M * prox;
}

// Exact maximizer of Phi over mu: the projection of
// lh + (c/M)(2 <lh, r> r - R) onto the simplex. The first-order-exact c/M
// prefactor is the default; the 2/M variant is kept for comparability.
inline AuxiliaryDistribution mu_update(const OccupancyMeasure& lam, const Table& reward,
                                       const Table& second_moment, double c, double M,
                                       bool compat_projection_constant = false) {
  require(M > 0.0, "proximal weight M must be positive");
  const double one_minus_gamma = 1.0 - lam.gamma;
  double lh_r = 0.0;
  for (size_t i = 0; i < lam.values.data.size(); ++i)
    lh_r += one_minus_gamma * lam.values.data[i] * reward.data[i];
  const double pref = (compat_projection_constant ? 2.0 : c) / M;
  Table target = lam.values;
  for (size_t i = 0; i < target.data.size(); ++i)
    target.data[i] = one_minus_gamma * lam.values.data[i] +
                     pref * (2.0 * lh_r * reward.data[i] - second_moment.data[i]);
  AuxiliaryDistribution mu;
  mu.values = project_simplex(target);
  return mu;
}

// Convex risk of the lambda block at fixed mu. Adding the proximal term to
// the quadratic makes <lambda, r> - c * rho(lambda) equal Phi(lambda, mu).
inline RiskSpec lambda_subproblem_risk(const AuxiliaryDistribution& mu, const Table& reward,
                                       const Table& second_moment, double c, double M,
                                       double gamma) {
  require(c > 0.0, "surrogate risk undefined at c = 0");
  require(M > 0.0, "proximal weight M must be positive");
  RiskSpec spec;
  spec.kind = RiskKind::bca_surrogate;
  spec.c = c;
  spec.gamma = gamma;
  spec.floor = default_floor(reward.num_states, reward.num_actions);
  spec.reward = reward;
  spec.second_moment = second_moment;
  spec.mu = mu.values;
  spec.bca_M = M;
  spec.sigma = sigma_default(spec);
  return spec;
}

// Desk-size calibration of the inner iteration budget: the schedule shape
// |S||A| log(|S||A|) (1 + c sigma)^2 / (1-gamma)^2 with a fixed scale so a
// 10x10 grid lands near 2e5 iterations.
inline int64_t derive_inner_T(int num_states, int num_actions, double gamma, double c,
                              double M) {
  const double n = static_cast<double>(num_states) * num_actions;
  const double sigma = (1.0 - gamma) * (1.0 + M / c);
  const double shape = n * std::log(std::max(n, 2.0)) * (1.0 + c * sigma) *
                       (1.0 + c * sigma) / ((1.0 - gamma) * (1.0 - gamma));
  return std::max<int64_t>(1000, static_cast<int64_t>(0.5 * shape));
}

struct BcaResult {
  OccupancyMeasure lambda;       // lambda^{k*}
  AuxiliaryDistribution mu;      // mu^{k*}
  int k_star = 0;                // uniform draw from {1, ..., K}
  std::vector<double> phi_after_mu;      // Phi(lambda^k, mu^{k+1})
  std::vector<double> phi_after_lambda;  // Phi(lambda^{k+1}, mu^{k+1})
  std::vector<SolveResult> inner;        // one solve per outer step
  std::vector<OccupancyMeasure> lambdas; // lambda^0 .. lambda^K
  std::vector<AuxiliaryDistribution> mus;// mu^1 .. mu^K
};

// Block-coordinate ascent on the variance surrogate: alternate the exact
// mu maximizer with a stochastic primal-dual solve of the lambda block.
inline BcaResult bca_solve(const GenerativeModel& model, const BcaConfig& config,
                           const IterateObserver& observer = {}) {
  require(config.K >= 1, "K must be positive");
  require(config.c > 0.0, "surrogate risk undefined at c = 0");
  const double M = config.M > 0.0 ? config.M : config.c;
  const TabularMDP& m = model.mdp();
  const int S = m.num_states, A = m.num_actions;
  const size_t n = static_cast<size_t>(S) * A;

  BcaResult result;
  OccupancyMeasure lam{Table(S, A, 1.0 / ((1.0 - m.gamma) * static_cast<double>(n))), m.gamma};
  result.lambdas.push_back(lam);

  for (int k = 0; k < config.K; ++k) {
    AuxiliaryDistribution mu =
        mu_update(lam, m.expected_reward, m.second_moment, config.c, M,
                  config.compat_projection_constant);
    result.phi_after_mu.push_back(
        surrogate_value(lam, mu, m.expected_reward, m.second_moment, config.c, M));

    RiskSpec sub = lambda_subproblem_risk(mu, m.expected_reward, m.second_moment, config.c,
                                          M, m.gamma);
    SolverConfig inner = config.inner;
    if (inner.T == 0) inner.T = derive_inner_T(S, A, m.gamma, config.c, M);
    inner.seed = child_seed(config.seed, static_cast<uint64_t>(k));
    SolveResult sol = solve(model, sub, inner, observer);
    lam = sol.lambda_bar;

    result.phi_after_lambda.push_back(
        surrogate_value(lam, mu, m.expected_reward, m.second_moment, config.c, M));
    result.mus.push_back(std::move(mu));
    result.lambdas.push_back(lam);
    result.inner.push_back(std::move(sol));
  }

  // k* stream is split off at a fixed offset so growing K or reseeding inner
  // solves never shifts it.
  Rng pick(child_seed(config.seed, 0x6b737461ull));
  result.k_star = 1 + pick.next_index(config.K);
  result.lambda = result.lambdas[result.k_star];
  result.mu = result.mus[result.k_star - 1];
  return result;
}

}  // namespace crl
