#pragma once

#include "equm/core.hpp"
#include "equm/policy.hpp"
#include "equm/rng.hpp"

#include <array>
#include <cstddef>
#include <memory>
#include <vector>

namespace equm {

struct Transition {
  VecX state;
  int action = 0;
  double reward = 0.0;
  bool next_is_terminal = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  double discount = 1.0;
  // Set when the horizon cap was hit before a terminal state; learners treat it as terminal.
  bool truncated = false;

  int stopping_time() const { return static_cast<int>(steps.size()); }
};

struct StepResult {
  double reward = 0.0;
  bool terminal = false;
};

/// Mutable state of one episode. Owned by a single rollout.
class Episode {
 public:
  virtual ~Episode() = default;
  virtual VecX observe() const = 0;
  virtual StepResult step(int action, RngStream& rng) = 0;
};

/// Immutable environment description. Safe to share between threads.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int action_count() const = 0;
  virtual int state_dim() const = 0;
  virtual int horizon_cap() const = 0;
  virtual std::unique_ptr<Episode> reset(RngStream& rng) const = 0;
};

struct Branch {
  double probability = 0.0;
  VecX state;
  double reward = 0.0;
  bool terminal = false;
};

/// Environment whose state, reward and transition structure can be listed
/// exhaustively. The state vector is the full Markov state.
class FiniteEnvironment : public Environment {
 public:
  virtual std::vector<Branch> initial_states() const = 0;
  virtual std::vector<Branch> successors(const VecX& state, int action) const = 0;

  // Samples branches of initial_states()/successors().
  std::unique_ptr<Episode> reset(RngStream& rng) const override;
};

/// Samples one episode. Throws IncompatibleError on policy/env mismatch and
/// std::invalid_argument when discount is outside (0, 1].
Trajectory rollout(const Environment& env, const Policy& policy, RngStream& rng, double discount = 1.0);

/// Discounted return sum_t discount^t r_t.
double cumulative_reward(const Trajectory& traj);

/// sum_t grad log pi(A_t | S_t) along the trajectory.
VecX score_sum(const Policy& policy, const Trajectory& traj);

// ---------------------------------------------------------------------------
// Exhaustive enumeration oracle

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

inline constexpr int kMaxEnumerationHorizon = 12;
inline constexpr std::size_t kDefaultEnumerationBudget = 1'000'000;

/// Lists every positive-probability trajectory exactly once. Throws
/// std::length_error when the horizon cap exceeds 12 or more than `budget`
/// trajectories would be produced.
std::vector<WeightedTrajectory> enumerate_trajectories(const FiniteEnvironment& env, const Policy& policy,
                                                       double discount = 1.0,
                                                       std::size_t budget = kDefaultEnumerationBudget);

struct ExactMoments {
  double mean = 0.0;           // E[R]
  double second_moment = 0.0;  // E[R^2]
  VecX grad_mean;              // grad E[R]
  VecX grad_second_moment;     // grad E[R^2]
};

ExactMoments exact_mean_and_gradients(const FiniteEnvironment& env, const Policy& policy, double discount = 1.0);

// ---------------------------------------------------------------------------
// Table-driven finite MDP, used as the oracle workbench.

class TabularMdp final : public FiniteEnvironment {
 public:
  struct Outcome {
    double probability;
    int next_state;  // ignored when terminal
    double reward;
    bool terminal;
  };

  TabularMdp(int n_states, int n_actions, std::vector<double> initial, int horizon_cap);

  /// Adds an outcome for (state, action). Probabilities per pair must sum to one.
  TabularMdp& add(int state, int action, Outcome outcome);

  int action_count() const override { return n_actions_; }
  int state_dim() const override { return n_states_; }
  int horizon_cap() const override { return horizon_cap_; }

  std::vector<Branch> initial_states() const override;
  std::vector<Branch> successors(const VecX& state, int action) const override;

  VecX one_hot(int state) const;

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> initial_;
  int horizon_cap_;
  std::vector<std::vector<std::vector<Outcome>>> table_;
};

// Oracle instances.

/// Root state 0; action a moves to state 1+a with reward root_rewards[a];
/// action b in state s ends with reward leaf_rewards[s-1][b]. Four trajectories.
TabularMdp binary_tree_mdp(std::array<double, 2> root_rewards, std::array<std::array<double, 2>, 2> leaf_rewards);

/// binary_tree_mdp with default, pairwise-distinct rewards.
TabularMdp binary_tree_mdp();

/// Like binary_tree_mdp but the root action only tilts the next-state
/// distribution and leaf rewards are noisy (two outcomes each).
TabularMdp stochastic_tree_mdp();

/// One state, one step, reward arm_rewards[a].
TabularMdp bandit_mdp(const std::vector<double>& arm_rewards);

/// `steps` states in a line, every action pays `reward`.
TabularMdp constant_reward_chain(int steps, int n_actions, double reward);

}  // namespace equm
