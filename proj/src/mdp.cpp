#include "equm/mdp.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace equm {

namespace {

const Branch& sample_branch(const std::vector<Branch>& branches, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < branches.size(); ++i) {
    acc += branches[i].probability;
    if (u < acc) return branches[i];
  }
  return branches.back();
}

class FiniteEpisode final : public Episode {
 public:
  FiniteEpisode(const FiniteEnvironment& env, VecX state) : env_(env), state_(std::move(state)) {}

  VecX observe() const override { return state_; }

  StepResult step(int action, RngStream& rng) override {
    const auto branches = env_.successors(state_, action);
    const Branch& b = sample_branch(branches, rng);
    if (!b.terminal) state_ = b.state;
    return {b.reward, b.terminal};
  }

 private:
  const FiniteEnvironment& env_;
  VecX state_;
};

void check_compatible(const Environment& env, const Policy& policy) {
  if (policy.action_count() != env.action_count() || policy.state_dim() != env.state_dim()) {
    throw IncompatibleError("policy (state_dim " + std::to_string(policy.state_dim()) + ", actions " +
                            std::to_string(policy.action_count()) + ") does not match environment (state_dim " +
                            std::to_string(env.state_dim()) + ", actions " + std::to_string(env.action_count()) + ")");
  }
}

void check_discount(double discount) {
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must lie in (0, 1]");
}

}  // namespace

std::unique_ptr<Episode> FiniteEnvironment::reset(RngStream& rng) const {
  const auto init = initial_states();
  return std::make_unique<FiniteEpisode>(*this, sample_branch(init, rng).state);
}

Trajectory rollout(const Environment& env, const Policy& policy, RngStream& rng, double discount) {
  check_discount(discount);
  check_compatible(env, policy);
  Trajectory traj;
  traj.discount = discount;
  auto episode = env.reset(rng);
  const int cap = env.horizon_cap();
  traj.steps.reserve(static_cast<std::size_t>(std::min(cap, 1024)));
  for (int t = 0; t < cap; ++t) {
    Transition tr;
    tr.state = episode->observe();
    tr.action = sample_categorical(policy.action_probs(tr.state), rng);
    const StepResult res = episode->step(tr.action, rng);
    tr.reward = res.reward;
    tr.next_is_terminal = res.terminal;
    traj.steps.push_back(std::move(tr));
    if (res.terminal) return traj;
  }
  traj.truncated = true;
  return traj;
}

double cumulative_reward(const Trajectory& traj) {
  double total = 0.0;
  double weight = 1.0;
  for (const auto& s : traj.steps) {
    total += weight * s.reward;
    weight *= traj.discount;
  }
  return total;
}

VecX score_sum(const Policy& policy, const Trajectory& traj) {
  VecX g = VecX::Zero(policy.num_params());
  for (const auto& s : traj.steps) policy.add_log_prob_grad(s.state, s.action, 1.0, g);
  return g;
}

// ---------------------------------------------------------------------------

std::vector<WeightedTrajectory> enumerate_trajectories(const FiniteEnvironment& env, const Policy& policy,
                                                       double discount, std::size_t budget) {
  check_discount(discount);
  check_compatible(env, policy);
  if (env.horizon_cap() > kMaxEnumerationHorizon) {
    throw std::length_error("enumeration needs horizon cap <= " + std::to_string(kMaxEnumerationHorizon) + ", got " +
                            std::to_string(env.horizon_cap()));
  }
  std::vector<WeightedTrajectory> out;
  Trajectory prefix;
  prefix.discount = discount;

  std::function<void(const VecX&, double)> expand = [&](const VecX& state, double prob) {
    const VecX pi = policy.action_probs(state);
    for (int a = 0; a < env.action_count(); ++a) {
      for (const Branch& b : env.successors(state, a)) {
        const double p = prob * pi[a] * b.probability;
        if (p <= 0.0) continue;
        prefix.steps.push_back({state, a, b.reward, b.terminal});
        const bool cap_hit = prefix.stopping_time() >= env.horizon_cap();
        if (b.terminal || cap_hit) {
          if (out.size() >= budget) {
            throw std::length_error("enumeration budget of " + std::to_string(budget) + " trajectories exceeded");
          }
          Trajectory done = prefix;
          done.truncated = !b.terminal;
          out.push_back({std::move(done), p});
        } else {
          expand(b.state, p);
        }
        prefix.steps.pop_back();
      }
    }
  };

  for (const Branch& init : env.initial_states()) {
    if (init.probability > 0.0) expand(init.state, init.probability);
  }
  return out;
}

ExactMoments exact_mean_and_gradients(const FiniteEnvironment& env, const Policy& policy, double discount) {
  ExactMoments m;
  m.grad_mean = VecX::Zero(policy.num_params());
  m.grad_second_moment = VecX::Zero(policy.num_params());
  for (const auto& wt : enumerate_trajectories(env, policy, discount)) {
    const double r = cumulative_reward(wt.trajectory);
    const VecX score = score_sum(policy, wt.trajectory);
    m.mean += wt.probability * r;
    m.second_moment += wt.probability * r * r;
    m.grad_mean += (wt.probability * r) * score;
    m.grad_second_moment += (wt.probability * r * r) * score;
  }
  return m;
}

// ---------------------------------------------------------------------------

TabularMdp::TabularMdp(int n_states, int n_actions, std::vector<double> initial, int horizon_cap)
    : n_states_(n_states), n_actions_(n_actions), initial_(std::move(initial)), horizon_cap_(horizon_cap) {
  if (static_cast<int>(initial_.size()) != n_states_) throw ConfigError("initial distribution length != n_states");
  table_.assign(n_states_, std::vector<std::vector<Outcome>>(n_actions_));
}

TabularMdp& TabularMdp::add(int state, int action, Outcome outcome) {
  table_.at(state).at(action).push_back(outcome);
  return *this;
}

VecX TabularMdp::one_hot(int state) const {
  VecX v = VecX::Zero(n_states_);
  v[state] = 1.0;
  return v;
}

std::vector<Branch> TabularMdp::initial_states() const {
  std::vector<Branch> out;
  for (int s = 0; s < n_states_; ++s) {
    if (initial_[s] > 0.0) out.push_back({initial_[s], one_hot(s), 0.0, false});
  }
  return out;
}

std::vector<Branch> TabularMdp::successors(const VecX& state, int action) const {
  Index s = 0;
  state.maxCoeff(&s);
  std::vector<Branch> out;
  for (const auto& o : table_.at(s).at(action)) {
    out.push_back({o.probability, o.terminal ? VecX() : one_hot(o.next_state), o.reward, o.terminal});
  }
  return out;
}

TabularMdp binary_tree_mdp(std::array<double, 2> root_rewards, std::array<std::array<double, 2>, 2> leaf_rewards) {
  TabularMdp mdp(3, 2, {1.0, 0.0, 0.0}, 2);
  for (int a = 0; a < 2; ++a) mdp.add(0, a, {1.0, 1 + a, root_rewards[a], false});
  for (int s = 1; s <= 2; ++s) {
    for (int b = 0; b < 2; ++b) mdp.add(s, b, {1.0, 0, leaf_rewards[s - 1][b], true});
  }
  return mdp;
}

TabularMdp binary_tree_mdp() { return binary_tree_mdp({0.5, -0.25}, {{{1.0, 3.0}, {-2.0, 4.5}}}); }

TabularMdp stochastic_tree_mdp() {
  TabularMdp mdp(3, 2, {1.0, 0.0, 0.0}, 2);
  mdp.add(0, 0, {0.7, 1, 0.3, false}).add(0, 0, {0.3, 2, 0.3, false});
  mdp.add(0, 1, {0.2, 1, -0.1, false}).add(0, 1, {0.8, 2, -0.1, false});
  mdp.add(1, 0, {0.5, 0, 1.0, true}).add(1, 0, {0.5, 0, 2.0, true});
  mdp.add(1, 1, {0.9, 0, 0.0, true}).add(1, 1, {0.1, 0, 9.0, true});
  mdp.add(2, 0, {0.6, 0, -1.0, true}).add(2, 0, {0.4, 0, 3.0, true});
  mdp.add(2, 1, {1.0, 0, 1.25, true});
  return mdp;
}

TabularMdp bandit_mdp(const std::vector<double>& arm_rewards) {
  TabularMdp mdp(1, static_cast<int>(arm_rewards.size()), {1.0}, 1);
  for (std::size_t a = 0; a < arm_rewards.size(); ++a) mdp.add(0, static_cast<int>(a), {1.0, 0, arm_rewards[a], true});
  return mdp;
}

TabularMdp constant_reward_chain(int steps, int n_actions, double reward) {
  std::vector<double> init(steps, 0.0);
  init[0] = 1.0;
  TabularMdp mdp(steps, n_actions, init, steps);
  for (int s = 0; s < steps; ++s) {
    for (int a = 0; a < n_actions; ++a) mdp.add(s, a, {1.0, s + 1, reward, s + 1 == steps});
  }
  return mdp;
}

}  // namespace equm
