#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "crl/common.hpp"
#include "crl/mdp.hpp"
#include "crl/risk.hpp"

namespace crl {

// ===== Value iteration =====================================================

struct ValueIterationResult {
  ValueVector v;
  Policy greedy;  // deterministic, lowest-index tie break
  int iterations = 0;
};

// Classic Bellman fixed point: stops once the sup-norm Bellman residual of
// the returned vector is at most tol.
inline ValueIterationResult value_iteration(const TabularMDP& m, double tol = 1e-10,
                                            int max_iters = 2000000) {
  const int S = m.num_states, A = m.num_actions;
  std::vector<double> v(S, 0.0), next(S, 0.0);
  int iters = 0;
  for (;; ++iters) {
    double diff = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        const double* row = m.row(a, s);
        double acc = m.expected_reward(s, a);
        for (int j = 0; j < S; ++j) acc += m.gamma * row[j] * v[j];
        best = std::max(best, acc);
      }
      next[s] = best;
      diff = std::max(diff, std::abs(best - v[s]));
    }
    v.swap(next);
    // One application of a gamma-contraction: residual of v is at most
    // gamma * diff.
    if (m.gamma * diff <= tol || diff == 0.0) break;
    if (iters >= max_iters) throw std::runtime_error("value iteration did not converge");
  }
  ValueIterationResult out;
  out.v = ValueVector{v};
  out.iterations = iters + 1;
  out.greedy.probs = Table(S, A, 0.0);
  for (int s = 0; s < S; ++s) {
    int best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
      const double* row = m.row(a, s);
      double acc = m.expected_reward(s, a);
      for (int j = 0; j < S; ++j) acc += m.gamma * row[j] * v[j];
      if (acc > best + 1e-15) {
        best = acc;
        best_a = a;
      }
    }
    out.greedy.probs(s, best_a) = 1.0;
  }
  return out;
}

// ===== Exact cautious solve ================================================

struct OracleOptions {
  double feas_tol = 1e-9;    // target ||A lambda - xi||_1
  double stat_tol = 1e-7;    // target inner stationarity
  double kkt_tol = 1e-6;     // target certificate with canonical multipliers
  int max_outer = 60;
  int64_t max_inner = 60000; // per outer round
  double eta0 = 100.0;
  double eta_max = 1e9;
};

struct OracleReport {
  OccupancyMeasure lambda;
  ValueVector v;             // canonical multipliers
  double objective = 0.0;    // <lambda, r> - c rho(lambda)
  double residual_l1 = 0.0;
  double kkt = 0.0;
  double stationarity = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  int64_t inner_iterations = 0;
};

namespace detail {

struct EntropicResult {
  double value = 0.0;
  double stationarity = 0.0;
  int64_t iterations = 0;
  bool converged = false;
};

// Gaussian elimination with partial pivoting; returns false on a singular
// system. a is row-major n x n and is destroyed.
inline bool solve_linear(int n, std::vector<double>& a, std::vector<double>& b) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-14) return false;
    if (pivot != col) {
      for (int k = col; k < n; ++k) std::swap(a[pivot * n + k], a[col * n + k]);
      std::swap(b[pivot], b[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (int k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    double acc = b[col];
    for (int k = col + 1; k < n; ++k) acc -= a[col * n + k] * b[k];
    b[col] = acc / a[col * n + col];
  }
  return true;
}

// Maximizes a smooth concave function over the scaled simplex of mass
// 1/(1-gamma) by normalized exponentiated-gradient ascent with backtracking.
// lambda is updated in place.
template <class ValueFn, class GradFn>
EntropicResult entropic_ascent(Table& lambda, double gamma, ValueFn&& value_fn,
                               GradFn&& grad_fn, int64_t max_iters, double stat_tol) {
  const size_t n = lambda.data.size();
  const double mass = 1.0 / (1.0 - gamma);
  double fval = value_fn(lambda);
  double tau = 1.0;
  Table grad, trial(lambda.num_states, lambda.num_actions, 0.0);
  EntropicResult res;
  for (int64_t it = 0; it < max_iters; ++it) {
    grad_fn(lambda, grad);
    // Stationarity of the current iterate: the centered gradient must vanish
    // on the support and be nonpositive off it. Entries below a negligible
    // normalized mass only count through their ascent direction; they are on
    // their way out of the support and their descent slack is irrelevant.
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += (1.0 - gamma) * lambda.data[i] * grad.data[i];
    double stat = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double d = grad.data[i] - mean;
      double weight = (1.0 - gamma) * lambda.data[i];
      stat = std::max(stat, weight > 1e-9 ? std::abs(d) : std::max(0.0, d));
    }
    res.stationarity = stat;
    res.iterations = it;
    if (stat <= stat_tol) {
      res.converged = true;
      break;
    }
    // Backtracking on the multiplicative step.
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < n; ++i) mx = std::max(mx, tau * (grad.data[i] - mean));
      double total = 0.0;
      for (size_t i = 0; i < n; ++i) {
        trial.data[i] = lambda.data[i] * std::exp(tau * (grad.data[i] - mean) - mx);
        total += trial.data[i];
      }
      if (total > 0.0 && std::isfinite(total)) {
        double scale = mass / total;
        for (size_t i = 0; i < n; ++i) trial.data[i] *= scale;
        double ftrial;
        try {
          ftrial = value_fn(trial);
        } catch (const std::runtime_error&) {
          ftrial = -std::numeric_limits<double>::infinity();  // barrier violated
        }
        if (ftrial >= fval - 1e-14 * (1.0 + std::abs(fval))) {
          lambda.data.swap(trial.data);
          fval = ftrial;
          tau = std::min(tau * 1.5, 1e8);
          accepted = true;
          break;
        }
      }
      tau *= 0.5;
    }
    if (!accepted) break;  // step collapsed; stationarity is as good as it gets
  }
  res.value = fval;
  return res;
}

}  // namespace detail

// max(flow residual, complementarity residual) with q = A^T v - r + c g.
inline double kkt_residual(const TabularMDP& m, const OccupancyMeasure& lam,
                           const ValueVector& v, const RiskSpec& risk,
                           const std::vector<double>& xi) {
  Table q = flow_adjoint(m, v.values);
  Table g = risk_subgradient(risk, lam);
  double comp = 0.0;
  for (size_t i = 0; i < q.data.size(); ++i) {
    double qi = q.data[i] - m.expected_reward.data[i] + risk.c * g.data[i];
    comp = std::max(comp, std::abs(std::min(lam.values.data[i], qi)));
  }
  return std::max(constraint_residual(m, lam, xi), comp);
}

struct SimplexMaxReport {
  OccupancyMeasure lambda;
  double value = 0.0;
  double stationarity = 0.0;
  bool converged = false;
};

// Maximizes a smooth concave functional over the scaled simplex of mass
// 1/(1-gamma), flow constraints dropped. The unconstrained-over-the-simplex
// maximum upper-bounds any constrained optimum, which is what weak-duality
// gap certificates need.
template <class ValueFn, class GradFn>
SimplexMaxReport concave_simplex_max(int num_states, int num_actions, double gamma,
                                     ValueFn&& value_fn, GradFn&& grad_fn,
                                     int64_t max_iters = 200000, double stat_tol = 1e-7) {
  const double n = static_cast<double>(num_states) * num_actions;
  Table lam(num_states, num_actions, 1.0 / ((1.0 - gamma) * n));
  detail::EntropicResult res =
      detail::entropic_ascent(lam, gamma, value_fn, grad_fn, max_iters, stat_tol);
  SimplexMaxReport rep;
  rep.lambda = OccupancyMeasure{lam, gamma};
  rep.value = res.value;
  rep.stationarity = res.stationarity;
  rep.converged = res.converged;
  return rep;
}

// Deterministic full-gradient reference solver for the caution-penalized
// flow problem: augmented-Lagrangian outer loops around entropic ascent on
// the scaled simplex. Intended for small instances (|S||A| up to ~200).
inline OracleReport exact_cautious_solve(const TabularMDP& m, const RiskSpec& risk,
                                         const std::vector<double>& xi,
                                         const OracleOptions& opt = {}) {
  const int S = m.num_states, A = m.num_actions;
  const size_t n = static_cast<size_t>(S) * A;
  const double gamma = m.gamma;

  Table lam(S, A, 1.0 / ((1.0 - gamma) * static_cast<double>(n)));
  std::vector<double> y(S, 0.0);
  double eta = opt.eta0;

  OracleReport report;
  double prev_resid = std::numeric_limits<double>::infinity();
  detail::EntropicResult inner;

  // Multiplier recovery. Two estimates, keep whichever certifies better:
  //  - shifted running multipliers: the mass constraint is redundant given
  //    the flow constraints, so shift y by the support level of the reduced
  //    gradient (adding kappa * 1 to v shifts every q_sa by kappa (1-gamma));
  //  - support least squares: on the support the reduced costs vanish,
  //    (A^T v)_sa = r_sa - c g_sa, which pins v independently of how sloppy
  //    the running y still is.
  auto shifted_v = [&](const Table& g) {
    Table aty = flow_adjoint(m, y);
    double level = 0.0;
    for (size_t i = 0; i < n; ++i)
      level += (1.0 - gamma) * lam.data[i] *
               (m.expected_reward.data[i] - risk.c * g.data[i] - aty.data[i]);
    std::vector<double> v = y;
    for (double& x : v) x += level / (1.0 - gamma);
    return ValueVector{v};
  };
  auto support_ls_v = [&](const Table& g) -> ValueVector {
    std::vector<double> normal(static_cast<size_t>(S) * S, 0.0), rhs(S, 0.0), row(S, 0.0);
    int rows = 0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        if ((1.0 - gamma) * lam(s, a) <= 1e-8) continue;
        ++rows;
        const double* p_row = m.row(a, s);
        for (int j = 0; j < S; ++j) row[j] = (j == s ? 1.0 : 0.0) - gamma * p_row[j];
        double target = m.expected_reward(s, a) - risk.c * g(s, a);
        for (int j = 0; j < S; ++j) {
          rhs[j] += row[j] * target;
          for (int k = 0; k < S; ++k) normal[static_cast<size_t>(j) * S + k] += row[j] * row[k];
        }
      }
    if (rows < S) return ValueVector{};
    for (int j = 0; j < S; ++j) normal[static_cast<size_t>(j) * S + j] += 1e-12;
    if (!detail::solve_linear(S, normal, rhs)) return ValueVector{};
    return ValueVector{rhs};
  };
  auto best_multipliers = [&](double& kkt_out) {
    OccupancyMeasure occ{lam, gamma};
    Table g = risk_subgradient(risk, occ);
    ValueVector cand = shifted_v(g);
    kkt_out = kkt_residual(m, occ, cand, risk, xi);
    ValueVector ls = support_ls_v(g);
    if (!ls.values.empty()) {
      double kkt_ls = kkt_residual(m, occ, ls, risk, xi);
      if (kkt_ls < kkt_out) {
        kkt_out = kkt_ls;
        return ls;
      }
    }
    return cand;
  };

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    auto value_fn = [&](const Table& t) {
      OccupancyMeasure occ{t, gamma};
      double f = dot(t, m.expected_reward) - risk.c * risk_value(risk, occ);
      std::vector<double> flow = flow_vector(m, t);
      for (int s = 0; s < S; ++s) {
        double viol = flow[s] - xi[s];
        f -= y[s] * viol + 0.5 * eta * viol * viol;
      }
      return f;
    };
    auto grad_fn = [&](const Table& t, Table& g) {
      OccupancyMeasure occ{t, gamma};
      g = risk_subgradient(risk, occ);
      std::vector<double> flow = flow_vector(m, t);
      std::vector<double> w(S);
      for (int s = 0; s < S; ++s) w[s] = y[s] + eta * (flow[s] - xi[s]);
      Table atw = flow_adjoint(m, w);
      for (size_t i = 0; i < n; ++i)
        g.data[i] = m.expected_reward.data[i] - risk.c * g.data[i] - atw.data[i];
    };

    inner = detail::entropic_ascent(lam, gamma, value_fn, grad_fn, opt.max_inner,
                                    opt.stat_tol);
    report.inner_iterations += inner.iterations;
    report.outer_iterations = outer + 1;

    std::vector<double> flow = flow_vector(m, lam);
    double resid = 0.0;
    for (int s = 0; s < S; ++s) resid += std::abs(flow[s] - xi[s]);
    if (resid <= opt.feas_tol) {
      report.v = best_multipliers(report.kkt);
      if (report.kkt <= opt.kkt_tol) {
        report.converged = true;
        break;
      }
    }
    for (int s = 0; s < S; ++s) y[s] += eta * (flow[s] - xi[s]);
    if (resid > 0.5 * prev_resid) eta = std::min(eta * 2.0, opt.eta_max);
    prev_resid = resid;
  }

  OccupancyMeasure occ{lam, gamma};
  report.lambda = occ;
  if (!report.converged) report.v = best_multipliers(report.kkt);
  report.objective = dot(lam, m.expected_reward) - risk.c * risk_value(risk, occ);
  report.residual_l1 = constraint_residual(m, occ, xi);
  report.stationarity = inner.stationarity;
  return report;
}

// ===== Optimality diagnostics ==============================================

struct BoundCheck {
  bool holds = false;
  double v_inf = 0.0;
  double bound = 0.0;
};

// Multiplier magnitude bound: canonical optimal multipliers satisfy
// ||v*||_inf <= (1 + c sigma) / (1 - gamma).
inline BoundCheck lemma1_bound_check(const TabularMDP& m, const RiskSpec& risk,
                                     const std::vector<double>& xi, double tol = 1e-6,
                                     const OracleOptions& opt = {}) {
  OracleReport rep = exact_cautious_solve(m, risk, xi, opt);
  BoundCheck check;
  check.v_inf = linf_norm(rep.v.values);
  check.bound = (1.0 + risk.c * risk.sigma) / (1.0 - m.gamma);
  check.holds = check.v_inf <= check.bound + tol;
  return check;
}

}  // namespace crl
