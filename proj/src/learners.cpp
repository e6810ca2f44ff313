#include "equm/learners.hpp"

#include "equm/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace equm {

UtilitySpec UtilitySpec::from_zeta(double zeta) {
  if (!(zeta > 0.0)) throw ConfigError("zeta must be positive (use inf for plain return maximization)");
  return std::isinf(zeta) ? UtilitySpec{1.0, 0.0} : UtilitySpec{1.0, 1.0 / zeta};
}

void UtilitySpec::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("utility alpha must be positive");
  if (!(beta >= 0.0)) throw ConfigError("utility beta must be non-negative");
}

VecX episode_gradient_reinforce(const Policy& policy, const Trajectory& traj) {
  return cumulative_reward(traj) * score_sum(policy, traj);
}

VecX episode_gradient_equm(const Policy& policy, const Trajectory& traj, const UtilitySpec& u) {
  return u(cumulative_reward(traj)) * score_sum(policy, traj);
}

VecX episode_gradient_xie(const Policy& policy, const Trajectory& traj, double y) {
  const double r = cumulative_reward(traj);
  return (2.0 * y * r - r * r) * score_sum(policy, traj);
}

void TrainOptions::validate() const {
  if (episodes < 1) throw ConfigError("training.episodes must be positive");
  if (batch < 1) throw ConfigError("training.batch must be >= 1");
  if (eval_every < 0) throw ConfigError("training.eval_every must be >= 0");
  if (eval_every > 0 && eval_trials < 2) throw ConfigError("training.eval_trials must be >= 2");
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("training.discount must lie in (0, 1]");
}

void write_training_log(std::ostream& os, const TrainingLog& log) {
  os << kTrainingLogHeader << '\n';
  for (const auto& r : log.rows) {
    os << r.episode << ',' << format_real(r.eval_cr) << ',' << format_real(r.eval_var) << ','
       << format_real(r.objective_estimate) << ',' << format_real(r.wallclock_ms) << '\n';
  }
}

namespace {

struct Moments {
  double mean = 0.0;
  double second = 0.0;
  double var = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  for (double x : xs) {
    m.mean += x;
    m.second += x * x;
  }
  const double n = static_cast<double>(xs.size());
  m.mean /= n;
  m.second /= n;
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= n;
  return m;
}

// Generic score-function trainer. `weights` maps the batch returns to the
// per-episode scalar multiplying sum_t grad log pi; `objective` scores the
// checkpoint evaluation sample.
class ScoreFunctionTrainer {
 public:
  using WeightFn = std::function<std::vector<double>(std::span<const double>)>;
  using ObjectiveFn = std::function<double(std::span<const double>)>;

  ScoreFunctionTrainer(const Environment& env, Policy& policy, const TrainOptions& opt)
      : env_(env), policy_(policy), opt_(opt), adam_(policy.num_params(), opt.adam) {
    opt_.validate();
  }

  TrainingLog run(const WeightFn& weights, const ObjectiveFn& objective) {
    TrainingLog log;
    const auto t0 = std::chrono::steady_clock::now();
    auto checkpoint = [&](long episode) {
      const auto rs = sample_returns(policy_, env_, opt_.eval_trials, opt_.seed, kCheckpointEvalStreams, opt_.discount);
      const Moments m = moments(rs);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log.rows.push_back({episode, m.mean, m.var, objective(rs), ms});
    };
    if (opt_.eval_every > 0) checkpoint(0);

    std::vector<Trajectory> trajs;
    std::vector<double> returns;
    VecX grad(policy_.num_params());
    for (long ep = 0; ep < opt_.episodes;) {
      const long b = std::min<long>(opt_.batch, opt_.episodes - ep);
      trajs.clear();
      returns.clear();
      for (long i = 0; i < b; ++i) {
        RngStream rng(opt_.seed, kTrainStreams + opt_.stream_offset + static_cast<std::uint64_t>(ep + i));
        trajs.push_back(rollout(env_, policy_, rng, opt_.discount));
        returns.push_back(cumulative_reward(trajs.back()));
      }
      std::vector<double> w = weights(returns);
      if (opt_.mean_baseline) {
        double batch_mean = 0.0;
        for (double& x : w) {
          batch_mean += x;
          x -= baseline_;
        }
        baseline_ += opt_.baseline_rate * (batch_mean / static_cast<double>(b) - baseline_);
      }
      grad.setZero();
      for (long i = 0; i < b; ++i) {
        for (const auto& s : trajs[i].steps) policy_.add_log_prob_grad(s.state, s.action, w[i], grad);
      }
      grad /= static_cast<double>(b);
      if (!grad.allFinite()) {
        throw NumericError("non-finite policy gradient at episode " + std::to_string(ep + b));
      }
      adam_apply(adam_, policy_.params_mut(), grad, true);
      if (!policy_.params().allFinite()) throw NumericError("non-finite policy parameters at episode " + std::to_string(ep + b));
      const long prev = ep;
      ep += b;
      if (opt_.eval_every > 0 && (ep / opt_.eval_every > prev / opt_.eval_every || ep == opt_.episodes)) checkpoint(ep);
    }
    return log;
  }

 private:
  const Environment& env_;
  Policy& policy_;
  TrainOptions opt_;
  AdamState adam_;
  double baseline_ = 0.0;
};

}  // namespace

TrainingLog train_reinforce(const Environment& env, Policy& policy, const TrainOptions& opt) {
  ScoreFunctionTrainer trainer(env, policy, opt);
  auto log = trainer.run([](std::span<const double> rs) { return std::vector<double>(rs.begin(), rs.end()); },
                         [](std::span<const double> rs) { return moments(rs).mean; });
  log.note = "reinforce";
  return log;
}

TrainingLog train_equm_pg(const Environment& env, Policy& policy, const UtilitySpec& u, const TrainOptions& opt) {
  u.validate();
  ScoreFunctionTrainer trainer(env, policy, opt);
  auto log = trainer.run(
      [u](std::span<const double> rs) {
        std::vector<double> w;
        w.reserve(rs.size());
        for (double r : rs) w.push_back(u(r));
        return w;
      },
      [u](std::span<const double> rs) {
        double acc = 0.0;
        for (double r : rs) acc += u(r);
        return acc / static_cast<double>(rs.size());
      });
  log.note = "equm alpha=" + format_real(u.alpha) + " beta=" + format_real(u.beta);
  return log;
}

// ---------------------------------------------------------------------------

double TamarConfig::penalty_slope(double excess) const {
  if (one_sided && excess <= 0.0) return 0.0;
  return penalty == Penalty::Linear ? 1.0 : 2.0 * excess;
}

double TamarConfig::penalty_value(double excess) const {
  if (one_sided && excess <= 0.0) return 0.0;
  return penalty == Penalty::Linear ? excess : excess * excess;
}

void TamarConfig::validate() const {
  if (!(delta >= 0.0)) throw ConfigError("learner.tamar.delta must be non-negative");
  if (!(var_target >= 0.0)) throw ConfigError("learner.tamar.var must be non-negative");
  if (!(tracker_rate > 0.0 && tracker_rate <= 1.0)) throw ConfigError("learner.tamar.tracker_rate must lie in (0, 1]");
}

TrainingLog train_tamar(const Environment& env, Policy& policy, const TamarConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  // Fast timescale: exponential trackers of E[R] and E[R^2]. Slow timescale:
  // Adam on theta with the plug-in variance gradient R^2 - 2 m R.
  double m = 0.0;
  double q = 0.0;
  bool started = false;
  ScoreFunctionTrainer trainer(env, policy, opt);
  auto log = trainer.run(
      [&](std::span<const double> rs) {
        const Moments batch = moments(rs);
        if (!started) {
          m = batch.mean;
          q = batch.second;
          started = true;
        }
        const double slope = cfg.delta * cfg.penalty_slope(q - m * m - cfg.var_target);
        std::vector<double> w;
        w.reserve(rs.size());
        for (double r : rs) w.push_back(r - slope * (r * r - 2.0 * m * r));
        m += cfg.tracker_rate * (batch.mean - m);
        q += cfg.tracker_rate * (batch.second - q);
        if (!std::isfinite(m) || !std::isfinite(q)) throw NumericError("tamar: moment tracker diverged");
        return w;
      },
      [&](std::span<const double> rs) {
        const Moments e = moments(rs);
        return e.mean - cfg.delta * cfg.penalty_value(e.var - cfg.var_target);
      });
  log.note = "tamar two-timescale (EMA trackers rate " + format_real(cfg.tracker_rate) + ", " +
             (cfg.penalty == TamarConfig::Penalty::Linear ? "linear" : "quadratic") + " penalty, " +
             (cfg.one_sided ? "one-sided" : "equality") + ")";
  return log;
}

void XieConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("learner.xie.lambda must be positive");
  if (!(tracker_rate > 0.0 && tracker_rate <= 1.0)) throw ConfigError("learner.xie.tracker_rate must lie in (0, 1]");
}

TrainingLog train_xie(const Environment& env, Policy& policy, const XieConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  double m = 0.0;
  double y = 0.0;
  bool started = false;
  ScoreFunctionTrainer trainer(env, policy, opt);
  auto log = trainer.run(
      [&](std::span<const double> rs) {
        const Moments batch = moments(rs);
        if (!started) {
          m = batch.mean;
          started = true;
        }
        y = cfg.y_step(m);
        std::vector<double> w;
        w.reserve(rs.size());
        for (double r : rs) w.push_back(2.0 * y * r - r * r);
        m += cfg.tracker_rate * (batch.mean - m);
        if (!std::isfinite(m)) throw NumericError("xie: mean tracker diverged");
        return w;
      },
      [&](std::span<const double> rs) {
        const Moments e = moments(rs);
        return 2.0 * y * (e.mean + 1.0 / (2.0 * cfg.lambda)) - y * y - e.second;
      });
  log.note = "xie coordinate ascent (lambda " + format_real(cfg.lambda) + ")";
  return log;
}

// ---------------------------------------------------------------------------

void AcConfig::validate() const {
  if (n_step < 1) throw ConfigError("learner.ac.n_step must be >= 1");
  for (int h : critic_hidden) {
    if (h < 1) throw ConfigError("learner.ac.critic_hidden widths must be positive");
  }
}

AcTargets ac_targets(const Trajectory& traj, const ValueFunction& m1, const ValueFunction& m2, int n_step) {
  const int tau = traj.stopping_time();
  AcTargets out;
  out.first.resize(tau);
  out.second.resize(tau);
  out.baseline1.resize(tau);
  out.baseline2.resize(tau);
  std::vector<double> v1(tau), v2(tau);
  for (int t = 0; t < tau; ++t) {
    v1[t] = m1(traj.steps[t].state);
    v2[t] = m2(traj.steps[t].state);
  }
  const double g = traj.discount;
  const double gn = std::pow(g, n_step);
  for (int t = 0; t < tau; ++t) {
    double partial = 0.0;
    double w = 1.0;
    const int end = std::min(t + n_step, tau);
    for (int i = t; i < end; ++i) {
      partial += w * traj.steps[i].reward;
      w *= g;
    }
    const bool bootstrap = t + n_step < tau;
    const double b1 = bootstrap ? v1[t + n_step] : 0.0;
    const double b2 = bootstrap ? v2[t + n_step] : 0.0;
    out.first[t] = partial + gn * b1;
    out.second[t] = partial * partial + 2.0 * gn * partial * b1 + gn * gn * b2;
    out.baseline1[t] = v1[t];
    out.baseline2[t] = v2[t];
  }
  return out;
}

VecX ac_actor_gradient(const Policy& policy, const Trajectory& traj, const AcTargets& targets, const UtilitySpec& u) {
  VecX g = VecX::Zero(policy.num_params());
  for (int t = 0; t < traj.stopping_time(); ++t) {
    const double target = u.alpha * targets.first[t] - 0.5 * u.beta * targets.second[t];
    const double base = u.alpha * targets.baseline1[t] - 0.5 * u.beta * targets.baseline2[t];
    policy.add_log_prob_grad(traj.steps[t].state, traj.steps[t].action, target - base, g);
  }
  return g;
}

AcResult train_equm_ac(const Environment& env, Policy& policy, const AcConfig& cfg, const UtilitySpec& u,
                       const TrainOptions& opt) {
  cfg.validate();
  u.validate();
  opt.validate();

  std::vector<int> dims{env.state_dim()};
  if (cfg.critic_hidden.empty()) {
    const int width = std::max(env.state_dim(), kMinCriticWidth);
    dims.push_back(width);
    dims.push_back(width);
  } else {
    dims.insert(dims.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  }
  dims.push_back(1);
  const Mlp critic(dims);
  RngStream init1(opt.seed, kInitStream + 1);
  RngStream init2(opt.seed, kInitStream + 2);
  VecX w1 = critic.init_params(init1);
  VecX w2 = critic.init_params(init2);
  AdamState actor_adam(policy.num_params(), opt.adam);
  AdamState adam1(critic.num_params(), cfg.critic_adam);
  AdamState adam2(critic.num_params(), cfg.critic_adam);

  auto m1 = [&](const VecX& s) { return critic.forward(w1, s)[0]; };
  auto m2 = [&](const VecX& s) { return critic.forward(w2, s)[0]; };

  AcResult result;
  const auto t0 = std::chrono::steady_clock::now();
  auto checkpoint = [&](long episode) {
    const auto rs = sample_returns(policy, env, opt.eval_trials, opt.seed, kCheckpointEvalStreams, opt.discount);
    const Moments m = moments(rs);
    double obj = 0.0;
    for (double r : rs) obj += u(r);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.rows.push_back({episode, m.mean, m.var, obj / static_cast<double>(rs.size()), ms});
  };
  if (opt.eval_every > 0) checkpoint(0);

  Mlp::Tape tape;
  const VecX one = VecX::Ones(1);
  for (long ep = 0; ep < opt.episodes;) {
    const long b = std::min<long>(opt.batch, opt.episodes - ep);
    VecX actor_grad = VecX::Zero(policy.num_params());
    VecX g1 = VecX::Zero(critic.num_params());
    VecX g2 = VecX::Zero(critic.num_params());
    double loss = 0.0;
    long visited = 0;
    for (long i = 0; i < b; ++i) {
      RngStream rng(opt.seed, kTrainStreams + opt.stream_offset + static_cast<std::uint64_t>(ep + i));
      const Trajectory traj = rollout(env, policy, rng, opt.discount);
      const AcTargets tg = ac_targets(traj, m1, m2, cfg.n_step);
      actor_grad += ac_actor_gradient(policy, traj, tg, u);
      for (int t = 0; t < traj.stopping_time(); ++t) {
        const VecX& s = traj.steps[t].state;
        const double e1 = tg.baseline1[t] - tg.first[t];
        const double e2 = tg.baseline2[t] - tg.second[t];
        loss += 0.5 * (e1 * e1 + e2 * e2);
        critic.forward(w1, s, tape);
        critic.backward(w1, tape, one, e1, g1);
        critic.forward(w2, s, tape);
        critic.backward(w2, tape, one, e2, g2);
      }
      visited += traj.stopping_time();
    }
    if (!std::isfinite(loss)) throw NumericError("actor-critic: critic loss is not finite at episode " + std::to_string(ep + b));
    actor_grad /= static_cast<double>(b);
    g1 /= static_cast<double>(std::max(1L, visited));
    g2 /= static_cast<double>(std::max(1L, visited));
    adam_apply(actor_adam, policy.params_mut(), actor_grad, true);
    adam_apply(adam1, w1, g1, false);
    adam_apply(adam2, w2, g2, false);
    const long prev = ep;
    ep += b;
    if (opt.eval_every > 0 && (ep / opt.eval_every > prev / opt.eval_every || ep == opt.episodes)) checkpoint(ep);
  }
  result.log.note = "equm actor-critic n_step=" + std::to_string(cfg.n_step);
  result.critic_dims = dims;
  result.critic1 = std::move(w1);
  result.critic2 = std::move(w2);
  return result;
}

// ---------------------------------------------------------------------------

DoubleSamplingReport compare_double_sampling_demo(const FiniteEnvironment& env, const Policy& policy,
                                                  const UtilitySpec& u) {
  const auto trajs = enumerate_trajectories(env, policy);
  const Index n = policy.num_params();
  DoubleSamplingReport rep;
  VecX grad_mean = VecX::Zero(n);
  VecX grad_second = VecX::Zero(n);
  VecX equm_avg = VecX::Zero(n);
  rep.plugin_average = VecX::Zero(n);
  for (const auto& wt : trajs) {
    const double r = cumulative_reward(wt.trajectory);
    const VecX score = score_sum(policy, wt.trajectory);
    rep.mean += wt.probability * r;
    grad_mean += (wt.probability * r) * score;
    grad_second += (wt.probability * r * r) * score;
    // same trajectory supplies both E[R] and grad E[R]
    rep.plugin_average += (wt.probability * 2.0 * r * r) * score;
    equm_avg += (wt.probability * u(r)) * score;
  }
  rep.exact_grad_mean_sq = 2.0 * rep.mean * grad_mean;
  rep.gap = rep.plugin_average - rep.exact_grad_mean_sq;
  rep.gap_norm = rep.gap.norm();
  rep.equm_gap = equm_avg - (u.alpha * grad_mean - 0.5 * u.beta * grad_second);
  rep.equm_gap_norm = rep.equm_gap.norm();
  return rep;
}

}  // namespace equm
