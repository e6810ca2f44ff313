#include "equm/config.hpp"
#include "equm/harness.hpp"
#include "equm/oracle_checks.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace equm;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<long> seed;
  std::string out;
  bool paper_scale = false;
};

KeyValueConfig load_config(const CommonOptions& o) {
  KeyValueConfig kv = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
  for (const auto& s : o.overrides) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, found '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) kv.set("training.seed", std::to_string(*o.seed));
  if (o.paper_scale) kv.set("training.final_eval_trials", std::to_string(kFullEvalTrials));
  return kv;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key=value configuration file");
  cmd->add_option("--set", o.overrides, "override a configuration key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "training / evaluation seed");
  cmd->add_option("--out", o.out, "output directory (default: output.dir)");
  cmd->add_flag("--paper-scale", o.paper_scale, "evaluate on 100,000 trials instead of 10,000");
}

std::string out_dir(const CommonOptions& o, const ExperimentConfig& cfg) { return o.out.empty() ? cfg.output_dir : o.out; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-variance reinforcement learning experiments (expected quadratic utility maximization)"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, sweep_o, wf_o;
  auto* train = app.add_subcommand("train", "train a policy; writes policy.txt, training_log.csv, eval.csv");
  add_common(train, train_o);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a policy checkpoint; prints one EvalReport row");
  add_common(evaluate_cmd, eval_o);
  std::string checkpoint;
  std::optional<long> trials;
  evaluate_cmd->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  evaluate_cmd->add_option("--trials", trials, "number of evaluation trials (default: training.final_eval_trials)");

  auto* sweep = app.add_subcommand("sweep", "cross sweep.param.* value lists and seeds; writes sweep.csv");
  add_common(sweep, sweep_o);

  auto* frontier = app.add_subcommand("frontier", "Pareto frontier of an EvalReport CSV; writes frontier.csv/.svg");
  std::string frontier_in, frontier_out = "out";
  bool no_svg = false;
  frontier->add_option("--input", frontier_in, "EvalReport CSV (e.g. sweep.csv)")->required();
  frontier->add_option("--out", frontier_out, "output directory");
  frontier->add_flag("--no-svg", no_svg, "skip the SVG scatter");

  auto* walkforward = app.add_subcommand("walkforward", "monthly out-of-sample evaluation on a returns dataset");
  add_common(walkforward, wf_o);

  auto* oracle = app.add_subcommand("oracle-check", "run the exact-enumeration and identity checks");
  long oracle_seed = 1;
  oracle->add_option("--seed", oracle_seed, "seed for randomized probes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      const ExperimentConfig cfg = experiment_from(load_config(train_o));
      const std::string dir = out_dir(train_o, cfg);
      const TrainOutcome out = cmd_train(cfg, dir);
      std::cout << kEvalReportHeader << '\n' << format_eval_row(out.eval) << '\n';
      std::cerr << "wrote " << dir << "/policy.txt, training_log.csv, eval.csv\n";
    } else if (*evaluate_cmd) {
      const ExperimentConfig cfg = experiment_from(load_config(eval_o));
      const long n = trials ? *trials : cfg.final_eval_trials;
      const EvalReport r = cmd_evaluate(checkpoint, cfg, n, cfg.training.seed);
      std::cout << kEvalReportHeader << '\n' << format_eval_row(r) << '\n';
      if (!eval_o.out.empty()) {
        std::filesystem::create_directories(eval_o.out);
        std::ofstream os(std::filesystem::path(eval_o.out) / "eval.csv");
        os << kEvalReportHeader << '\n' << format_eval_row(r) << '\n';
      }
    } else if (*sweep) {
      const KeyValueConfig kv = load_config(sweep_o);
      const SweepSpec spec = SweepSpec::from(kv);
      const std::string dir = sweep_o.out.empty() ? kv.get_string("output.dir", "out") : sweep_o.out;
      const SweepResult res = cmd_sweep(spec, dir);
      for (const auto& run : res.runs) {
        std::cerr << (run.ok ? "ok   " : "FAIL ") << run.label << (run.ok ? "" : ": " + run.error) << '\n';
      }
      std::cerr << res.runs.size() - res.failures() << "/" << res.runs.size() << " runs succeeded; wrote " << dir
                << "/sweep.csv\n";
      if (res.failures() == static_cast<long>(res.runs.size())) return kExitFailure;
    } else if (*frontier) {
      const auto points = cmd_frontier(frontier_in, frontier_out, !no_svg);
      for (const auto& p : points) {
        std::cout << (p.dominated ? "dominated     " : "non-dominated ") << p.label << " var=" << p.var
                  << " cr=" << p.cr << '\n';
      }
    } else if (*walkforward) {
      const ExperimentConfig cfg = experiment_from(load_config(wf_o));
      const WalkforwardResult res = cmd_walkforward(cfg, out_dir(wf_o, cfg));
      std::cout << kEvalReportHeader << '\n' << format_eval_row(res.summary) << '\n';
    } else if (*oracle) {
      bool ok = true;
      for (const auto& r : run_oracle_suite(static_cast<std::uint64_t>(oracle_seed))) {
        std::cout << format_check(r) << '\n';
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitFailure;
    }
  } catch (...) {
    return report_exception(std::cerr);
  }
  return kExitOk;
}
