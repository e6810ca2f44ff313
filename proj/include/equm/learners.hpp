#pragma once

#include "equm/adam.hpp"
#include "equm/core.hpp"
#include "equm/mdp.hpp"
#include "equm/policy.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace equm {

/// u(R) = alpha R - beta R^2 / 2. beta == 0 is plain return maximization.
struct UtilitySpec {
  double alpha = 1.0;
  double beta = 0.0;

  /// alpha = 1, beta = 1/zeta; zeta = +inf gives beta = 0.
  static UtilitySpec from_zeta(double zeta);

  /// Target return alpha / beta (+inf when beta == 0).
  double zeta() const { return beta > 0.0 ? alpha / beta : std::numeric_limits<double>::infinity(); }
  /// Weight of E[R^2] in the regularized risk -E[R] + psi E[R^2].
  double psi() const { return beta / (2.0 * alpha); }

  double operator()(double r) const { return alpha * r - 0.5 * beta * r * r; }

  void validate() const;
};

// ---------------------------------------------------------------------------
// Single-trajectory score-function estimators

/// R * sum_t grad log pi
VecX episode_gradient_reinforce(const Policy& policy, const Trajectory& traj);

/// (alpha R - beta R^2 / 2) * sum_t grad log pi
VecX episode_gradient_equm(const Policy& policy, const Trajectory& traj, const UtilitySpec& u);

/// (2 y R - R^2) * sum_t grad log pi, the theta-block of the dual objective at fixed y.
VecX episode_gradient_xie(const Policy& policy, const Trajectory& traj, double y);

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  long episodes = 20000;
  int batch = 10;
  std::uint64_t seed = 1;
  long eval_every = 200;  // 0 disables checkpoint evaluation
  long eval_trials = 100;
  AdamConfig adam;
  bool mean_baseline = true;  // subtract a running mean of the episode weight
  double baseline_rate = 0.01;
  double discount = 1.0;
  // Training episode k runs on RngStream(seed, kTrainStreams + stream_offset + k).
  std::uint64_t stream_offset = 0;

  void validate() const;
};

struct LogRow {
  long episode = 0;
  double eval_cr = 0.0;
  double eval_var = 0.0;
  double objective_estimate = 0.0;
  double wallclock_ms = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  std::string note;  // free-form description of the method instantiation
};

inline constexpr const char* kTrainingLogHeader = "episode,eval_cr,eval_var,objective_estimate,wallclock_ms";
void write_training_log(std::ostream& os, const TrainingLog& log);

TrainingLog train_reinforce(const Environment& env, Policy& policy, const TrainOptions& opt);
TrainingLog train_equm_pg(const Environment& env, Policy& policy, const UtilitySpec& u, const TrainOptions& opt);

struct TamarConfig {
  enum class Penalty { Linear, Quadratic };

  double delta = 1.0;       // penalty weight
  double var_target = 0.0;  // eta
  Penalty penalty = Penalty::Linear;
  bool one_sided = true;     // penalize only Var > eta
  double tracker_rate = 0.1;

  /// g'(x) for x = tracked variance - eta
  double penalty_slope(double excess) const;
  double penalty_value(double excess) const;
  void validate() const;
};

TrainingLog train_tamar(const Environment& env, Policy& policy, const TamarConfig& cfg, const TrainOptions& opt);

struct XieConfig {
  double lambda = 10.0;  // penalty coefficient of the dual objective
  double tracker_rate = 0.1;

  /// Closed-form maximizer of the dual objective in y for a tracked mean.
  double y_step(double tracked_mean) const { return tracked_mean + 1.0 / (2.0 * lambda); }
  void validate() const;
};

TrainingLog train_xie(const Environment& env, Policy& policy, const XieConfig& cfg, const TrainOptions& opt);

// ---------------------------------------------------------------------------
// Actor-critic

using ValueFunction = std::function<double(const VecX&)>;

inline constexpr int kMinCriticWidth = 32;

struct AcConfig {
  int n_step = 5;
  std::vector<int> critic_hidden;  // empty -> two layers of max(state_dim, kMinCriticWidth)
  AdamConfig critic_adam{0.01, 0.9, 0.999, 1e-8, 0.0, true};

  void validate() const;
};

/// n-step bootstrapped targets of one trajectory, index t = visited step.
struct AcTargets {
  std::vector<double> first;     // R~_t
  std::vector<double> second;    // R~2_t
  std::vector<double> baseline1; // M1(S_t)
  std::vector<double> baseline2; // M2(S_t)
};

/// R~_t = R_{t:t+n-1} + g^n M1(S_{t+n}),
/// R~2_t = R_{t:t+n-1}^2 + 2 g^n R_{t:t+n-1} M1(S_{t+n}) + g^{2n} M2(S_{t+n}).
/// Bootstraps are zero past the end of the episode (truncation included).
AcTargets ac_targets(const Trajectory& traj, const ValueFunction& m1, const ValueFunction& m2, int n_step);

/// sum_t grad log pi(S_t, A_t) [u-target - u-baseline]
VecX ac_actor_gradient(const Policy& policy, const Trajectory& traj, const AcTargets& targets, const UtilitySpec& u);

struct AcResult {
  TrainingLog log;
  std::vector<int> critic_dims;
  VecX critic1;
  VecX critic2;
};

AcResult train_equm_ac(const Environment& env, Policy& policy, const AcConfig& cfg, const UtilitySpec& u,
                       const TrainOptions& opt);

// ---------------------------------------------------------------------------
// Double sampling

struct DoubleSamplingReport {
  double mean = 0.0;
  VecX exact_grad_mean_sq;  // grad (E[R])^2 = 2 E[R] grad E[R]
  VecX plugin_average;      // E[2 R * R sum grad log pi] using one trajectory for both factors
  VecX gap;                 // plugin_average - exact_grad_mean_sq
  double gap_norm = 0.0;
  VecX equm_gap;            // E[u(R) sum grad log pi] - (alpha grad E[R] - beta/2 grad E[R^2])
  double equm_gap_norm = 0.0;
};

DoubleSamplingReport compare_double_sampling_demo(const FiniteEnvironment& env, const Policy& policy,
                                                  const UtilitySpec& u = {1.0, 1.0});

}  // namespace equm
