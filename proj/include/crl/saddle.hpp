#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "crl/common.hpp"
#include "crl/generative.hpp"
#include "crl/mdp.hpp"
#include "crl/risk.hpp"

namespace crl {

// ===== Configuration =======================================================

struct SolverConfig {
  int64_t T = 100000;
  double delta = 0.1;       // exploration mixing weight, in (0, 1/2)
  bool auto_params = true;  // derive alpha/beta/M1/M2 from the step schedule
  double alpha = 0.0;
  double beta = 0.0;
  double M1 = 0.0;
  double M2 = 0.0;
  uint64_t seed = 0;
  std::vector<double> xi;   // initial distribution; empty means uniform
  int64_t record_every = 0; // 0 derives max(1, T / 200)
  // Value clip radius; 0 derives the worst-case 2(1 + c sigma)/(1 - gamma).
  // Experiment-scale runs with hand-tuned steps usually want the natural
  // problem scale here instead of the sigma-based bound.
  double v_radius = 0.0;
};

struct ScheduleParams {
  double alpha = 0.0;
  double beta = 0.0;
  double M1 = 0.0;
  double M2 = 0.0;
};

// Step sizes and shift constants that make every dual increment nonpositive
// while preserving the regret rate.
inline ScheduleParams default_parameters(int num_states, int num_actions, int64_t T,
                                         double gamma, double c, double sigma) {
  require(T >= 1, "T must be positive");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  const double n = static_cast<double>(num_states) * num_actions;
  ScheduleParams p;
  p.M1 = 4.0 * (1.0 + c * sigma) / (1.0 - gamma);
  p.M2 = c * sigma;
  p.beta = (1.0 - gamma) / (1.0 + c * sigma) *
           std::sqrt(std::log(n) / (static_cast<double>(T) * n));
  p.alpha = std::sqrt(static_cast<double>(num_states) / static_cast<double>(T)) *
            (1.0 + c * sigma);
  return p;
}

struct TransitionSample {
  int s = 0;
  int a = 0;
  int s_next = 0;
  int s_bar = 0;     // independent draw from xi
  double r_hat = 0.0;
};

struct MetricsRecord {
  int64_t t = 0;
  double objective = 0.0;    // <lambda_bar, r> - c rho(lambda_bar), internal scale
  double residual_l1 = 0.0;  // ||A lambda_bar - xi||_1
  std::optional<double> kl_to_prior;
  std::optional<double> phi; // surrogate value, filled by the block-coordinate loop
  double wall_ms = 0.0;
};

struct SolveResult {
  OccupancyMeasure lambda_bar;
  ValueVector v_bar;
  Policy policy;
  std::vector<MetricsRecord> metrics;
};

// Iterate view handed to the optional per-iteration observer; references stay
// valid only during the call.
struct IterateView {
  int64_t t = 0;
  const Table& lambda;
  const std::vector<double>& v;
  const Table& zeta;
  const Table& delta;
  const TransitionSample& sample;
};

using IterateObserver = std::function<void(const IterateView&)>;
using RecordHook = std::function<void(int64_t t, const OccupancyMeasure& lambda_bar,
                                      const ValueVector& v_bar)>;

// ===== Update pieces =======================================================

// zeta = (1 - delta) * normalized(lambda) + delta / (|S||A|). Self-normalizes
// by the actual mass of lambda so the mixture sums to 1 at float precision.
inline void exploration_mixture_into(const Table& lambda, double delta, Table& zeta) {
  double mass = 0.0;
  for (double x : lambda.data) mass += x;
  require(mass > 0.0, "exploration mixture needs positive occupancy mass");
  const double scale = (1.0 - delta) / mass;
  const double base = delta / static_cast<double>(lambda.data.size());
  zeta.num_states = lambda.num_states;
  zeta.num_actions = lambda.num_actions;
  zeta.data.resize(lambda.data.size());
  for (size_t i = 0; i < lambda.data.size(); ++i)
    zeta.data[i] = scale * lambda.data[i] + base;
}

inline Table exploration_mixture(const Table& lambda, double delta) {
  Table zeta;
  exploration_mixture_into(lambda, delta, zeta);
  return zeta;
}

// Single-sample estimate of the v-gradient of the Lagrangian:
// e_{s_bar} + (lambda_sa / zeta_sa) (gamma e_{s'} - e_s).
inline std::vector<double> primal_gradient_estimate(const TransitionSample& smp,
                                                    const Table& lambda, const Table& zeta,
                                                    double gamma) {
  std::vector<double> g(lambda.num_states, 0.0);
  g[smp.s_bar] += 1.0;
  double z = zeta(smp.s, smp.a);
  if (z > 0.0) {
    double w = lambda(smp.s, smp.a) / z;
    g[smp.s_next] += w * gamma;
    g[smp.s] -= w;
  }
  return g;
}

// Shifted dual increment. Every entry carries -c g_sa - M2; the sampled pair
// additionally receives the importance-weighted temporal difference.
inline void dual_increment_into(const TransitionSample& smp, const std::vector<double>& v,
                                const Table& zeta, const Table& risk_grad, double c,
                                double M1, double M2, double gamma, Table& delta) {
  delta.num_states = zeta.num_states;
  delta.num_actions = zeta.num_actions;
  delta.data.resize(zeta.data.size());
  for (size_t i = 0; i < zeta.data.size(); ++i)
    delta.data[i] = -c * risk_grad.data[i] - M2;
  double z = zeta(smp.s, smp.a);
  require(z > 0.0, "sampled pair has zero exploration probability");
  delta(smp.s, smp.a) += (smp.r_hat + gamma * v[smp.s_next] - v[smp.s] - M1) / z;
}

inline Table dual_increment(const TransitionSample& smp, const std::vector<double>& v,
                            const Table& zeta, const Table& risk_grad, double c, double M1,
                            double M2, double gamma) {
  Table delta;
  dual_increment_into(smp, v, zeta, risk_grad, c, M1, M2, gamma, delta);
  return delta;
}

// Projected subgradient step for the minimizing player: clip each coordinate
// of v - alpha * g to the box [-radius, radius].
inline void primal_step_into(std::vector<double>& v, const std::vector<double>& grad,
                             double alpha, double radius) {
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(v[i] - alpha * grad[i], -radius, radius);
}

inline std::vector<double> primal_step(const std::vector<double>& v,
                                       const std::vector<double>& grad, double alpha,
                                       double radius) {
  std::vector<double> out = v;
  primal_step_into(out, grad, alpha, radius);
  return out;
}

// Entropic ascent step on the scaled simplex: lambda'_sa proportional to
// lambda_sa * exp(beta delta_sa), renormalized to mass 1/(1-gamma). The max
// of beta*delta is subtracted before exponentiation.
inline void dual_step_into(Table& lambda, const Table& delta, double beta, double gamma) {
  double m = -std::numeric_limits<double>::infinity();
  for (double d : delta.data) m = std::max(m, beta * d);
  if (!std::isfinite(m)) throw std::runtime_error("dual step: nonfinite increment");
  double total = 0.0;
  for (size_t i = 0; i < lambda.data.size(); ++i) {
    lambda.data[i] *= std::exp(beta * delta.data[i] - m);
    total += lambda.data[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::runtime_error("dual step: degenerate iterate (all-zero occupancy)");
  const double scale = 1.0 / ((1.0 - gamma) * total);
  for (double& x : lambda.data) x *= scale;
}

inline Table dual_step(const Table& lambda, const Table& delta, double beta, double gamma) {
  Table out = lambda;
  dual_step_into(out, delta, beta, gamma);
  return out;
}

// ===== Main loop ===========================================================

namespace detail {

// Inverse-CDF sampler over a weight table; the prefix sum is rebuilt each
// iteration and queried by binary search.
class PrefixSampler {
 public:
  void rebuild(const std::vector<double>& w) {
    prefix_.resize(w.size());
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      prefix_[i] = acc;
    }
    total_ = acc;
  }

  int draw(Rng& rng) const {
    double target = rng.next_double() * total_;
    auto it = std::upper_bound(prefix_.begin(), prefix_.end(), target);
    size_t idx = it == prefix_.end() ? prefix_.size() - 1
                                     : static_cast<size_t>(it - prefix_.begin());
    // Skip zero-weight cells reachable only through rounding ties.
    while (idx > 0 && prefix_[idx] == prefix_[idx - 1]) --idx;
    return static_cast<int>(idx);
  }

  double total() const { return total_; }

 private:
  std::vector<double> prefix_;
  double total_ = 0.0;
};

}  // namespace detail

inline void validate_solver_config(const SolverConfig& cfg, int num_states) {
  require(cfg.T >= 1, "T must be positive");
  require(cfg.delta > 0.0 && cfg.delta < 0.5, "delta must lie in (0, 1/2)");
  if (!cfg.auto_params) {
    require(cfg.alpha > 0.0 && cfg.beta >= 0.0, "manual schedule needs alpha > 0, beta >= 0");
    require(cfg.M1 >= 0.0 && cfg.M2 >= 0.0, "shifts must be nonnegative");
  }
  if (!cfg.xi.empty()) {
    require(static_cast<int>(cfg.xi.size()) == num_states, "xi has wrong length");
    double acc = 0.0;
    for (double x : cfg.xi) {
      require(x >= 0.0, "invalid initial distribution");
      acc += x;
    }
    require(std::abs(acc - 1.0) <= 1e-9, "invalid initial distribution");
  }
  require(cfg.record_every >= 0, "record_every must be nonnegative");
  require(cfg.v_radius >= 0.0, "v_radius must be nonnegative");
}

// Stochastic primal-dual saddle-point loop on the caution-penalized
// Lagrangian. Model access is sampling-only; the exact model behind the
// generative interface is used for the periodic metrics and nothing else.
inline SolveResult solve(const GenerativeModel& model, const RiskSpec& risk,
                         const SolverConfig& config, const IterateObserver& observer = {},
                         const RecordHook& on_record = {}) {
  const int S = model.num_states();
  const int A = model.num_actions();
  const double gamma = model.mdp().gamma;
  const size_t n = static_cast<size_t>(S) * A;
  validate_solver_config(config, S);

  std::vector<double> xi = config.xi.empty() ? uniform_xi(S) : config.xi;
  ScheduleParams sched;
  if (config.auto_params) {
    sched = default_parameters(S, A, config.T, gamma, risk.c, risk.sigma);
  } else {
    sched = {config.alpha, config.beta, config.M1, config.M2};
  }
  const double radius = config.v_radius > 0.0
                            ? config.v_radius
                            : 2.0 * (1.0 + risk.c * risk.sigma) / (1.0 - gamma);
  const int64_t record_every =
      config.record_every > 0 ? config.record_every : std::max<int64_t>(1, config.T / 200);

  Rng rng(config.seed);
  detail::PrefixSampler xi_sampler;
  xi_sampler.rebuild(xi);
  detail::PrefixSampler zeta_sampler;

  OccupancyMeasure lam{Table(S, A, 1.0 / ((1.0 - gamma) * static_cast<double>(n))), gamma};
  std::vector<double> v(S, 0.0);

  OccupancyMeasure lam_bar{Table(S, A, 0.0), gamma};
  std::vector<double> v_bar(S, 0.0);

  Table zeta, delta;
  std::vector<MetricsRecord> metrics;
  const auto start = std::chrono::steady_clock::now();

  for (int64_t t = 1; t <= config.T; ++t) {
    // Running averages include the current iterate before it is updated.
    const double inv_t = 1.0 / static_cast<double>(t);
    for (size_t i = 0; i < n; ++i)
      lam_bar.values.data[i] += (lam.values.data[i] - lam_bar.values.data[i]) * inv_t;
    for (int s = 0; s < S; ++s) v_bar[s] += (v[s] - v_bar[s]) * inv_t;

    exploration_mixture_into(lam.values, config.delta, zeta);
    zeta_sampler.rebuild(zeta.data);
    int flat = zeta_sampler.draw(rng);
    TransitionSample smp;
    smp.s = flat / A;
    smp.a = flat % A;
    smp.s_bar = xi_sampler.draw(rng);
    auto [s_next, r_hat] = model.sample(smp.s, smp.a, rng);
    smp.s_next = s_next;
    smp.r_hat = r_hat;

    Table g = risk_subgradient(risk, lam);
    std::vector<double> vgrad = primal_gradient_estimate(smp, lam.values, zeta, gamma);
    dual_increment_into(smp, v, zeta, g, risk.c, sched.M1, sched.M2, gamma, delta);

    if (observer) observer(IterateView{t, lam.values, v, zeta, delta, smp});

    if (t % record_every == 0 || t == config.T) {
      MetricsRecord rec;
      rec.t = t;
      double rho = std::numeric_limits<double>::quiet_NaN();
      try {
        rho = risk_value(risk, lam_bar);
      } catch (const std::runtime_error&) {
        // Barrier violated by the averaged iterate: objective is undefined.
      }
      rec.objective = dot(lam_bar.values, model.mdp().expected_reward) - risk.c * rho;
      rec.residual_l1 = constraint_residual(model.mdp(), lam_bar, xi);
      if (risk.kind == RiskKind::kl_prior && std::isfinite(rho)) rec.kl_to_prior = rho;
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      metrics.push_back(rec);
      if (on_record) on_record(t, lam_bar, ValueVector{v_bar});
    }

    primal_step_into(v, vgrad, sched.alpha, radius);
    dual_step_into(lam.values, delta, sched.beta, gamma);
  }

  SolveResult result;
  result.lambda_bar = std::move(lam_bar);
  result.v_bar = ValueVector{std::move(v_bar)};
  result.policy = policy_from_occupancy(result.lambda_bar);
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace crl
