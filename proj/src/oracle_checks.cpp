#include "equm/oracle_checks.hpp"

#include "equm/environments.hpp"
#include "equm/learners.hpp"
#include "equm/mdp.hpp"
#include "equm/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

namespace equm {

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

CheckResult finish(CheckResult r, const Timer& t) {
  r.passed = r.max_error <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

double max_abs_diff(const VecX& a, const VecX& b) { return (a - b).cwiseAbs().maxCoeff(); }

VecX random_params(Index n, RngStream& rng, double scale) {
  VecX v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// Expectation of f(R) by enumeration.
double enumerated_expectation(const FiniteEnvironment& env, const Policy& policy, const std::function<double(double)>& f) {
  double acc = 0.0;
  for (const auto& wt : enumerate_trajectories(env, policy)) acc += wt.probability * f(cumulative_reward(wt.trajectory));
  return acc;
}

}  // namespace

CheckResult check_estimator_identities(std::uint64_t seed) {
  Timer timer;
  CheckResult r{"estimator identities on enumerable MDPs", false, 0.0, 1e-10, "", 0.0};
  RngStream rng(seed, 101);
  const TabularMdp envs[] = {binary_tree_mdp(), stochastic_tree_mdp()};
  const UtilitySpec utilities[] = {{1.0, 0.5}, {2.0, 0.1}, {0.7, 1.3}};
  int cases = 0;
  for (const auto& env : envs) {
    for (int rep = 0; rep < 5; ++rep) {
      TabularSoftmaxPolicy policy(env.state_dim(), env.action_count());
      policy.set_params(random_params(policy.num_params(), rng, 2.0));
      const ExactMoments exact = exact_mean_and_gradients(env, policy);
      VecX avg_r = VecX::Zero(policy.num_params());
      VecX avg_r2 = VecX::Zero(policy.num_params());
      std::vector<VecX> avg_u(std::size(utilities), VecX::Zero(policy.num_params()));
      for (const auto& wt : enumerate_trajectories(env, policy)) {
        avg_r += wt.probability * episode_gradient_reinforce(policy, wt.trajectory);
        // R^2 estimator == EQUM estimator with alpha = 0, beta = -2
        const double ret = cumulative_reward(wt.trajectory);
        avg_r2 += (wt.probability * ret * ret) * score_sum(policy, wt.trajectory);
        for (std::size_t k = 0; k < std::size(utilities); ++k) {
          avg_u[k] += wt.probability * episode_gradient_equm(policy, wt.trajectory, utilities[k]);
        }
      }
      r.max_error = std::max(r.max_error, max_abs_diff(avg_r, exact.grad_mean));
      r.max_error = std::max(r.max_error, max_abs_diff(avg_r2, exact.grad_second_moment));
      for (std::size_t k = 0; k < std::size(utilities); ++k) {
        const auto& u = utilities[k];
        const VecX target = u.alpha * exact.grad_mean - 0.5 * u.beta * exact.grad_second_moment;
        r.max_error = std::max(r.max_error, max_abs_diff(avg_u[k], target));
      }
      ++cases;
    }
  }
  r.detail = std::to_string(cases) + " random tabular policies, 2 MDPs, 3 utilities";
  return finish(r, timer);
}

CheckResult check_exact_gradients_fd(std::uint64_t seed) {
  Timer timer;
  CheckResult r{"exact gradients vs finite differences", false, 0.0, 1e-8, "", 0.0};
  RngStream rng(seed, 102);
  const TabularMdp envs[] = {binary_tree_mdp(), stochastic_tree_mdp()};
  const double h = 1e-3;
  for (const auto& env : envs) {
    for (int rep = 0; rep < 3; ++rep) {
      TabularSoftmaxPolicy policy(env.state_dim(), env.action_count());
      const VecX theta = random_params(policy.num_params(), rng, 2.0);
      policy.set_params(theta);
      const ExactMoments exact = exact_mean_and_gradients(env, policy);
      for (int moment = 1; moment <= 2; ++moment) {
        auto f = [&](const VecX& th) {
          TabularSoftmaxPolicy p(env.state_dim(), env.action_count());
          p.set_params(th);
          return enumerated_expectation(env, p, [&](double x) { return moment == 1 ? x : x * x; });
        };
        for (Index i = 0; i < theta.size(); ++i) {
          VecX e = VecX::Zero(theta.size());
          e[i] = h;
          const double fd = (-f(theta + 2 * e) + 8 * f(theta + e) - 8 * f(theta - e) + f(theta - 2 * e)) / (12 * h);
          const double g = moment == 1 ? exact.grad_mean[i] : exact.grad_second_moment[i];
          r.max_error = std::max(r.max_error, std::abs(fd - g));
        }
      }
    }
  }
  r.detail = "fourth-order central differences, h=1e-3";
  return finish(r, timer);
}

namespace {

// Rectifier pattern of the hidden layers at (params, state).
std::vector<bool> relu_pattern(const Mlp& net, const VecX& params, const VecX& state) {
  Mlp::Tape tape;
  net.forward(params, state, tape);
  std::vector<bool> pattern;
  for (std::size_t l = 1; l + 1 < tape.activations.size(); ++l) {
    for (Index j = 0; j < tape.activations[l].size(); ++j) pattern.push_back(tape.activations[l][j] > 0.0);
  }
  return pattern;
}

}  // namespace

CheckResult check_log_prob_gradients(std::uint64_t seed, int probes) {
  Timer timer;
  CheckResult r{"log_prob_grad vs central differences", false, 0.0, 1e-5, "", 0.0};
  RngStream rng(seed, 103);
  const double h = 1e-4;
  int redrawn = 0;
  for (int probe = 0; probe < probes;) {
    const int d = 1 + static_cast<int>(rng.uniform() * 8);
    const int h1 = 1 + static_cast<int>(rng.uniform() * 8);
    const int h2 = 1 + static_cast<int>(rng.uniform() * 8);
    const int a = 2 + static_cast<int>(rng.uniform() * 4);
    MlpPolicy policy({d, h1, h2, a}, rng());
    const VecX theta = policy.params() + random_params(policy.num_params(), rng, 0.5);
    policy.set_params(theta);
    const VecX state = random_params(d, rng, 2.0);
    const int action = std::min(a - 1, static_cast<int>(rng.uniform() * a));
    const Mlp& net = policy.network();

    const auto pattern = relu_pattern(net, theta, state);
    bool kink = false;
    VecX fd(theta.size());
    for (Index i = 0; i < theta.size() && !kink; ++i) {
      VecX tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      kink = relu_pattern(net, tp, state) != pattern || relu_pattern(net, tm, state) != pattern;
      const double lp = std::log(softmax(net.forward(tp, state))[action]);
      const double lm = std::log(softmax(net.forward(tm, state))[action]);
      fd[i] = (lp - lm) / (2 * h);
    }
    if (kink) {
      ++redrawn;
      continue;
    }
    const VecX g = policy.log_prob_grad(state, action);
    const double denom = std::max({g.norm(), fd.norm(), 1e-12});
    r.max_error = std::max(r.max_error, (g - fd).norm() / denom);
    ++probe;
  }
  r.detail = std::to_string(probes) + " probes (relative error in 2-norm), " + std::to_string(redrawn) +
             " redrawn for rectifier kinks";
  return finish(r, timer);
}

CheckResult check_algebraic_identities(std::uint64_t seed) {
  Timer timer;
  CheckResult r{"mean-variance, psi and dual identities", false, 0.0, 1e-10, "", 0.0};
  RngStream rng(seed, 104);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); };

  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform() * 500);
    const double scale = std::pow(10.0, 2.0 * rng.uniform() - 1.0);
    const double shift = 10.0 * (2.0 * rng.uniform() - 1.0);
    std::vector<double> xs(n);
    for (auto& x : xs) x = shift + scale * (2.0 * rng.uniform() - 1.0);
    const UtilitySpec u{0.1 + 3.0 * rng.uniform(), 0.01 + 2.0 * rng.uniform()};

    double mean = 0.0, second = 0.0, eu = 0.0;
    for (double x : xs) {
      mean += x;
      second += x * x;
      eu += u(x);
    }
    mean /= n;
    second /= n;
    eu /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    double mse = 0.0;
    for (double x : xs) mse += (u.zeta() - x) * (u.zeta() - x);
    mse /= n;

    // E[u] = alpha E[R] - beta/2 (Var + E[R]^2)
    r.max_error = std::max(r.max_error, rel(eu, u.alpha * mean - 0.5 * u.beta * (var + mean * mean)));
    // E[u] = -alpha (-E[R] + psi E[R^2])
    r.max_error = std::max(r.max_error, rel(eu, -u.alpha * (-mean + u.psi() * second)));
    // E[(zeta - R)^2] = zeta^2 - (2 / beta) E[u]
    r.max_error = std::max(r.max_error, rel(mse, u.zeta() * u.zeta() - 2.0 / u.beta * eu));
  }

  PortfolioSynthEnv env;
  MlpPolicy policy(synthetic_layer_dims(env.state_dim(), env.action_count()), seed);
  for (int rep = 0; rep < 50; ++rep) {
    RngStream ep(seed, 1000 + rep);
    const Trajectory traj = rollout(env, policy, ep);
    const double y = 20.0 * (2.0 * rng.uniform() - 1.0);
    const VecX xie = episode_gradient_xie(policy, traj, y);
    const VecX equm2 = 2.0 * episode_gradient_equm(policy, traj, UtilitySpec{y, 1.0});
    r.max_error = std::max(r.max_error, max_abs_diff(xie, equm2) / std::max(1.0, xie.cwiseAbs().maxCoeff()));
  }
  r.detail = "200 random samples x 3 identities, 50 trajectories for the dual estimator";
  return finish(r, timer);
}

CheckResult check_mse_equivalence() {
  Timer timer;
  CheckResult r{"argmax E[u] == argmin MSE(zeta) on 21x21 grid (and full ranking)", false, 0.0, 0.0, "", 0.0};
  const TabularMdp env = binary_tree_mdp();
  const UtilitySpec settings[] = {{1.0, 1.0}, {1.5, 0.5}, {1.0, 0.1}};
  const int n = 21;
  int mismatches = 0;
  std::string cells;
  for (const auto& u : settings) {
    const double zeta = u.zeta();
    double best_u = -1e300, best_mse = 1e300;
    int arg_u = -1, arg_mse = -1;
    std::vector<std::pair<double, double>> values;  // (E[u], MSE) per cell
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double root = -5.0 + 10.0 * i / (n - 1);
        const double leaf = -5.0 + 10.0 * j / (n - 1);
        TabularSoftmaxPolicy policy(3, 2);
        VecX theta = VecX::Zero(6);
        theta[1] = root;  // logit of action 1 in the root
        theta[3] = leaf;  // logit of action 1 in both leaves
        theta[5] = leaf;
        policy.set_params(theta);
        const double eu = enumerated_expectation(env, policy, [&](double x) { return u(x); });
        const double mse = enumerated_expectation(env, policy, [&](double x) { return (zeta - x) * (zeta - x); });
        values.emplace_back(eu, mse);
        if (eu > best_u) best_u = eu, arg_u = i * n + j;
        if (mse < best_mse) best_mse = mse, arg_mse = i * n + j;
      }
    }
    if (arg_u != arg_mse) ++mismatches;
    // The whole ranking agrees, not just the maximizer.
    std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (values[k].second < values[k - 1].second - 1e-12 * std::max(1.0, values[k].second)) ++mismatches;
    }
    cells += (cells.empty() ? "" : ", ") + std::string("zeta=") + std::to_string(zeta).substr(0, 4) + " cell (" +
             std::to_string(arg_u / n) + "," + std::to_string(arg_u % n) + ")";
  }
  r.max_error = mismatches;
  r.detail = cells;
  return finish(r, timer);
}

CheckResult check_double_sampling() {
  Timer timer;
  CheckResult r{"double-sampling bias demo", false, 0.0, 1e-12, "", 0.0};
  const TabularMdp chain = constant_reward_chain(3, 2, 1.0);
  TabularSoftmaxPolicy chain_policy(chain.state_dim(), 2);
  VecX theta(chain_policy.num_params());
  for (Index i = 0; i < theta.size(); ++i) theta[i] = 0.3 * static_cast<double>(i % 3) - 0.2;
  chain_policy.set_params(theta);
  const auto det = compare_double_sampling_demo(chain, chain_policy);

  const TabularMdp bandit = bandit_mdp({1.0, 0.0});
  TabularSoftmaxPolicy bandit_policy(1, 2);
  const auto two = compare_double_sampling_demo(bandit, bandit_policy);

  r.max_error = std::max({det.gap_norm, det.equm_gap_norm, two.equm_gap_norm});
  const bool biased = two.gap_norm > 1e-3;
  if (!biased) r.max_error = std::max(r.max_error, 1.0);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "constant chain gap %.3g, bandit gap %.6g (must be > 0), equm gaps %.3g / %.3g",
                det.gap_norm, two.gap_norm, det.equm_gap_norm, two.equm_gap_norm);
  r.detail = buf;
  return finish(r, timer);
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  return {check_estimator_identities(seed), check_exact_gradients_fd(seed), check_log_prob_gradients(seed),
          check_algebraic_identities(seed), check_mse_equivalence(), check_double_sampling()};
}

std::string format_check(const CheckResult& r) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), ": max_error=%.3g tol=%.3g (%.2fs)", r.max_error, r.tolerance, r.seconds);
  return std::string(r.passed ? "PASS " : "FAIL ") + r.name + buf + (r.detail.empty() ? "" : " [" + r.detail + "]");
}

}  // namespace equm
