#pragma once

#include <utility>

#include "crl/common.hpp"
#include "crl/mdp.hpp"

namespace crl {

// Sampling access to an MDP: given (state, action) and a caller-owned rng,
// draw (next_state, reward in [0, 1]). The exact model is reachable through
// mdp() for diagnostics and metrics only; the optimization loop must not read
// transition probabilities from it.
class GenerativeModel {
 public:
  virtual ~GenerativeModel() = default;
  virtual int num_states() const = 0;
  virtual int num_actions() const = 0;
  virtual std::pair<int, double> sample(int s, int a, Rng& rng) const = 0;
  virtual const TabularMDP& mdp() const = 0;
};

// Generative model backed by an explicit TabularMDP. Carries its own rng so
// that standalone draws are reproducible from the construction seed; solvers
// pass their own rng instead.
class SampledModel final : public GenerativeModel {
 public:
  SampledModel(TabularMDP m, uint64_t seed = 0) : mdp_(std::move(m)), rng_(seed) {}

  int num_states() const override { return mdp_.num_states; }
  int num_actions() const override { return mdp_.num_actions; }
  const TabularMDP& mdp() const override { return mdp_; }

  std::pair<int, double> sample(int s, int a, Rng& rng) const override {
    const double* row = mdp_.row(a, s);
    double u = rng.next_double();
    double acc = 0.0;
    int j = mdp_.num_states - 1;
    for (int k = 0; k < mdp_.num_states; ++k) {
      acc += row[k];
      if (u < acc) {
        j = k;
        break;
      }
    }
    // Rounding tail: fall back to the last reachable state.
    while (j > 0 && row[j] == 0.0) --j;
    double r = mdp_.has_transition_rewards() ? mdp_.r_hat(s, j, a) : mdp_.expected_reward(s, a);
    return {j, r};
  }

  // Draw using the model's own stream.
  std::pair<int, double> sample_own(int s, int a) { return sample(s, a, rng_); }

  Rng& rng() { return rng_; }

 private:
  TabularMDP mdp_;
  Rng rng_;
};

}  // namespace crl
