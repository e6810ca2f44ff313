#include "equm/environments.hpp"
#include "equm/mdp.hpp"
#include "equm/policy.hpp"
#include "equm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace equm;

namespace {

Trajectory with_rewards(std::vector<double> rewards, double discount) {
  Trajectory t;
  t.discount = discount;
  for (double r : rewards) t.steps.push_back({VecX::Zero(1), 0, r, false});
  if (!t.steps.empty()) t.steps.back().next_is_terminal = true;
  return t;
}

double softmax2(double a, double b, int which) {
  const double ea = std::exp(a), eb = std::exp(b);
  return (which == 0 ? ea : eb) / (ea + eb);
}

}  // namespace

TEST_CASE("RngStream reproduces reference splitmix64 draws") {
  RngStream rng(42, 7);
  CHECK(rng() == 0x05484a33ea7df68dULL);
  CHECK(rng() == 0xb74704b411a697ffULL);
  CHECK(rng() == 0xb382d2a581933628ULL);
  CHECK(rng.draws() == 3);
}

TEST_CASE("RngStream streams are independent of draw order elsewhere") {
  RngStream a(1, 5), b(1, 5), c(1, 6), d(2, 5);
  const auto first = a();
  CHECK(first == b());
  CHECK(first != c());
  CHECK(first != d());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("sample_categorical follows the inverse CDF") {
  RngStream rng(3, 0);
  VecX p(3);
  p << 0.2, 0.5, 0.3;
  std::array<int, 3> counts{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[sample_categorical(p, rng)];
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(n) - p[k]) < 0.005);
}

TEST_CASE("cumulative_reward examples") {
  CHECK(cumulative_reward(with_rewards({1, 1, 1}, 1.0)) == 3.0);
  CHECK(cumulative_reward(with_rewards({1, 1}, 0.5)) == 1.5);
  CHECK(cumulative_reward(with_rewards({2, -1, 4}, 0.9)) == doctest::Approx(2.0 - 0.9 + 0.81 * 4.0).epsilon(1e-15));
  CHECK(cumulative_reward(with_rewards({2, -1, 4}, 0.9)) == doctest::Approx(4.34).epsilon(1e-14));
}

TEST_CASE("rollout on a deterministic one-step environment") {
  const TabularMdp env = constant_reward_chain(1, 2, 1.0);
  TabularSoftmaxPolicy policy(1, 2);
  RngStream rng(1, 0);
  const Trajectory t = rollout(env, policy, rng);
  CHECK(t.stopping_time() == 1);
  CHECK(cumulative_reward(t) == 1.0);
  CHECK(!t.truncated);
  CHECK(t.steps.back().next_is_terminal);
}

TEST_CASE("rollout with all-zero rewards returns zero for any policy") {
  const TabularMdp env = constant_reward_chain(4, 3, 0.0);
  TabularSoftmaxPolicy policy(4, 3);
  RngStream prng(9, 9);
  for (int k = 0; k < 10; ++k) {
    VecX theta(policy.num_params());
    for (Index i = 0; i < theta.size(); ++i) theta[i] = 4.0 * prng.uniform() - 2.0;
    policy.set_params(theta);
    RngStream rng(k, 0);
    CHECK(cumulative_reward(rollout(env, policy, rng)) == 0.0);
  }
}

TEST_CASE("rollout on the portfolio environment is bit-identical for a fixed stream") {
  PortfolioSynthEnv env;
  MlpPolicy policy(synthetic_layer_dims(env.state_dim(), 2), 11);
  RngStream a(5, 77), b(5, 77);
  const Trajectory t1 = rollout(env, policy, a);
  const Trajectory t2 = rollout(env, policy, b);
  REQUIRE(t1.stopping_time() == t2.stopping_time());
  CHECK(t1.stopping_time() == 50);
  for (int i = 0; i < t1.stopping_time(); ++i) {
    CHECK(t1.steps[i].action == t2.steps[i].action);
    CHECK(t1.steps[i].reward == t2.steps[i].reward);
    CHECK(t1.steps[i].state == t2.steps[i].state);
  }
}

TEST_CASE("rollout validates its arguments") {
  const TabularMdp env = constant_reward_chain(2, 2, 1.0);
  TabularSoftmaxPolicy ok(2, 2), wrong_actions(2, 3), wrong_dim(3, 2);
  RngStream rng(1, 0);
  CHECK_THROWS_AS(rollout(env, ok, rng, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rollout(env, ok, rng, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(rollout(env, wrong_actions, rng), IncompatibleError);
  CHECK_THROWS_AS(rollout(env, wrong_dim, rng), IncompatibleError);
}

TEST_CASE("rollout truncates and flags an episode that overruns the horizon cap") {
  TabularMdp loop(1, 2, {1.0}, 4);
  loop.add(0, 0, {1.0, 0, 1.0, false}).add(0, 1, {1.0, 0, 2.0, false});
  TabularSoftmaxPolicy policy(1, 2);
  RngStream rng(2, 0);
  const Trajectory t = rollout(loop, policy, rng);
  CHECK(t.truncated);
  CHECK(t.stopping_time() == 4);
}

TEST_CASE("enumerate_trajectories on a uniform bandit") {
  const TabularMdp env = bandit_mdp({1.0, 0.0});
  TabularSoftmaxPolicy policy(1, 2);
  const auto all = enumerate_trajectories(env, policy);
  REQUIRE(all.size() == 2);
  CHECK(all[0].probability == 0.5);
  CHECK(all[1].probability == 0.5);
}

TEST_CASE("enumerate_trajectories with deterministic dynamics and policy") {
  const TabularMdp env = binary_tree_mdp();
  TabularSoftmaxPolicy policy(3, 2);
  VecX theta = VecX::Zero(6);
  theta[1] = 1000.0;  // always action 1
  theta[3] = 1000.0;
  theta[5] = 1000.0;
  policy.set_params(theta);
  std::vector<WeightedTrajectory> live;
  double rest = 0.0;
  for (const auto& wt : enumerate_trajectories(env, policy)) {
    if (wt.probability > 1e-200) live.push_back(wt);
    else rest += wt.probability;
  }
  REQUIRE(live.size() == 1);
  CHECK(live[0].probability == 1.0);
  CHECK(rest < 1e-300);
  CHECK(cumulative_reward(live[0].trajectory) == 4.25);
}

TEST_CASE("binary tree enumeration matches products of policy probabilities") {
  const TabularMdp env = binary_tree_mdp();
  TabularSoftmaxPolicy policy(3, 2);
  VecX theta(6);
  theta << 0.3, -0.4, 1.2, 0.1, -0.7, 0.5;
  policy.set_params(theta);
  const auto all = enumerate_trajectories(env, policy);
  REQUIRE(all.size() == 4);
  const double returns[2][2] = {{1.5, 3.5}, {-2.25, 4.25}};
  double total = 0.0;
  for (const auto& wt : all) {
    const int a = wt.trajectory.steps[0].action;
    const int b = wt.trajectory.steps[1].action;
    const double expected = softmax2(theta[0], theta[1], a) * softmax2(theta[2 + 2 * a], theta[3 + 2 * a], b);
    CHECK(wt.probability == doctest::Approx(expected).epsilon(1e-14));
    CHECK(cumulative_reward(wt.trajectory) == returns[a][b]);
    total += wt.probability;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("enumeration probabilities sum to one on a stochastic tree") {
  const TabularMdp env = stochastic_tree_mdp();
  RngStream rng(4, 4);
  for (int rep = 0; rep < 20; ++rep) {
    TabularSoftmaxPolicy policy(3, 2);
    VecX theta(6);
    for (Index i = 0; i < 6; ++i) theta[i] = 6.0 * rng.uniform() - 3.0;
    policy.set_params(theta);
    double total = 0.0;
    const auto all = enumerate_trajectories(env, policy);
    for (const auto& wt : all) total += wt.probability;
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(all.size() == 14);  // root branches 2x2, leaves 2+2+2+1
  }
}

TEST_CASE("enumeration refuses oversized instances") {
  const TabularMdp long_chain = constant_reward_chain(13, 2, 1.0);
  TabularSoftmaxPolicy p13(13, 2);
  CHECK_THROWS_AS(enumerate_trajectories(long_chain, p13), std::length_error);
  const TabularMdp chain = constant_reward_chain(12, 2, 1.0);
  TabularSoftmaxPolicy p12(12, 2);
  CHECK_THROWS_AS(enumerate_trajectories(chain, p12, 1.0, 1000), std::length_error);
  CHECK(enumerate_trajectories(chain, p12, 1.0, 4096).size() == 4096);
}

TEST_CASE("exact gradients vanish when rewards do not depend on actions") {
  const TabularMdp env = constant_reward_chain(3, 2, 2.0);
  TabularSoftmaxPolicy policy(3, 2);
  VecX theta(6);
  theta << 0.5, -1.0, 2.0, 0.0, 0.3, 0.3;
  policy.set_params(theta);
  const ExactMoments m = exact_mean_and_gradients(env, policy);
  CHECK(m.mean == doctest::Approx(6.0));
  CHECK(m.second_moment == doctest::Approx(36.0));
  CHECK(m.grad_mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.grad_second_moment.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bandit exact mean and gradient") {
  const TabularMdp env = bandit_mdp({1.0, 0.0});
  TabularSoftmaxPolicy policy(1, 2);
  const ExactMoments m = exact_mean_and_gradients(env, policy);
  CHECK(m.mean == doctest::Approx(0.5).epsilon(1e-15));
  // d/dtheta_0 of sigma(theta_0 - theta_1) at 0 is 1/4
  CHECK(m.grad_mean[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(m.grad_mean[1] == doctest::Approx(-0.25).epsilon(1e-15));
}

TEST_CASE("probability-weighted score estimators reproduce exact gradients") {
  const TabularMdp env = stochastic_tree_mdp();
  TabularSoftmaxPolicy policy(3, 2);
  VecX theta(6);
  theta << -0.2, 0.9, 0.4, -1.1, 0.0, 0.6;
  policy.set_params(theta);
  const ExactMoments m = exact_mean_and_gradients(env, policy);
  VecX g1 = VecX::Zero(6), g2 = VecX::Zero(6);
  for (const auto& wt : enumerate_trajectories(env, policy)) {
    const double r = cumulative_reward(wt.trajectory);
    g1 += wt.probability * r * score_sum(policy, wt.trajectory);
    g2 += wt.probability * r * r * score_sum(policy, wt.trajectory);
  }
  CHECK((g1 - m.grad_mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g2 - m.grad_second_moment).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite environment sampling matches enumeration frequencies") {
  const TabularMdp env = stochastic_tree_mdp();
  TabularSoftmaxPolicy policy(3, 2);
  const ExactMoments m = exact_mean_and_gradients(env, policy);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    RngStream rng(8, i);
    sum += cumulative_reward(rollout(env, policy, rng));
  }
  const double sd = std::sqrt(m.second_moment - m.mean * m.mean);
  CHECK(std::abs(sum / n - m.mean) < 5.0 * sd / std::sqrt(double(n)));
}
