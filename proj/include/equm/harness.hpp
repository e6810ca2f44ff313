#pragma once

#include "equm/config.hpp"
#include "equm/learners.hpp"
#include "equm/metrics.hpp"
#include "equm/policy.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace equm {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitIncompatible = 3, kExitNumeric = 4 };

/// Maps the exception currently being handled to an exit code and writes its message.
int report_exception(std::ostream& err);

/// Runs the configured learner on a policy in place.
TrainingLog train_policy(const ExperimentConfig& cfg, const Environment& env, Policy& policy, const TrainOptions& opt);

/// final_eval_trials rollouts on the evaluation streams of training.seed.
EvalReport final_evaluation(const ExperimentConfig& cfg, const Environment& env, const Policy& policy);

std::string run_label(const ExperimentConfig& cfg);

struct TrainOutcome {
  MlpPolicy policy;
  TrainingLog log;
  EvalReport eval;
};

TrainOutcome run_experiment(const ExperimentConfig& cfg);

/// Writes policy.txt, training_log.csv and eval.csv into out_dir.
TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);

/// Evaluates a checkpoint on the configured environment. IncompatibleError on a
/// dimension mismatch.
EvalReport cmd_evaluate(const std::string& checkpoint, const ExperimentConfig& cfg, long n_trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  KeyValueConfig base;
  std::vector<std::pair<std::string, std::vector<std::string>>> params;  // crossed in order
  std::vector<std::uint64_t> seeds{1};
  long budget = 1000;
  int threads = 0;  // 0 -> hardware concurrency

  /// Reads sweep.param.<key> = v1, v2, ...; sweep.seeds; sweep.budget; sweep.threads.
  static SweepSpec from(const KeyValueConfig& kv);
  long total_runs() const;
  /// Configuration of run `index`; the parameter odometer varies fastest in the last key, seeds outermost.
  KeyValueConfig run_config(long index) const;
};

struct SweepRun {
  long index = 0;
  std::string label;
  bool ok = false;
  std::string error;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRun> runs;  // in index order
  long failures() const;
};

/// Runs every configuration (concurrently when threads > 1), writing
/// out_dir/run_NNNN/{policy.txt,training_log.csv,eval.csv}, out_dir/sweep.csv
/// (successful rows in index order) and out_dir/failures.csv.
SweepResult cmd_sweep(const SweepSpec& spec, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Frontier

/// Reads an EvalReport CSV, flags dominated rows, writes frontier.csv with the
/// non-dominated rows and (optionally) frontier.svg.
std::vector<FrontierPoint> cmd_frontier(const std::string& csv_path, const std::string& out_dir, bool emit_svg = true);

/// Var on x, CR on y; non-dominated points filled, dominated points hollow.
std::string frontier_svg(const std::vector<FrontierPoint>& points);

// ---------------------------------------------------------------------------
// Walk-forward

struct WalkforwardResult {
  std::vector<int> dates;
  std::vector<double> returns;
  std::vector<VecX> weights;
  EvalReport summary;  // sqrt(12) annualization
};

/// For each of the last test_months months: train on the trailing window
/// (learner strategy, warm-started across months), then hold the policy's
/// weights for the month.
WalkforwardResult run_walkforward(const ExperimentConfig& cfg, const ReturnsMatrix& data);

/// Loads the dataset and writes walkforward.csv (date, return, weights) and
/// walkforward_summary.csv.
WalkforwardResult cmd_walkforward(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace equm
