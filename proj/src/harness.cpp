#include "equm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

namespace equm {

namespace fs = std::filesystem;

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IncompatibleError& e) {
    err << "incompatible: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

void write_eval_csv(const fs::path& path, const std::vector<EvalReport>& rows) {
  auto os = open_out(path);
  os << kEvalReportHeader << '\n';
  for (const auto& r : rows) os << format_eval_row(r) << '\n';
}

}  // namespace

TrainingLog train_policy(const ExperimentConfig& cfg, const Environment& env, Policy& policy, const TrainOptions& opt) {
  const auto& l = cfg.learner;
  switch (l.method) {
    case LearnerSpec::Method::Reinforce: return train_reinforce(env, policy, opt);
    case LearnerSpec::Method::Equm: return train_equm_pg(env, policy, l.utility, opt);
    case LearnerSpec::Method::Tamar: return train_tamar(env, policy, l.tamar, opt);
    case LearnerSpec::Method::Xie: return train_xie(env, policy, l.xie, opt);
    case LearnerSpec::Method::EqumAc: return train_equm_ac(env, policy, l.ac, l.utility, opt).log;
  }
  throw ConfigError("unknown learner method");
}

std::string run_label(const ExperimentConfig& cfg) {
  if (!cfg.label.empty()) return cfg.label;
  return learner_descriptor(cfg.learner) + " seed=" + std::to_string(cfg.training.seed);
}

EvalReport final_evaluation(const ExperimentConfig& cfg, const Environment& env, const Policy& policy) {
  SummaryOptions so;
  const auto m = cfg.learner.method;
  if ((m == LearnerSpec::Method::Equm || m == LearnerSpec::Method::EqumAc) && cfg.learner.utility.beta > 0.0) {
    so.zeta = cfg.learner.utility.zeta();
  }
  EvalReport r = evaluate(policy, env, cfg.final_eval_trials, cfg.training.seed, so);
  r.label = run_label(cfg);
  return r;
}

TrainOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto env = make_environment(cfg.env);
  MlpPolicy policy(policy_dims(cfg, *env), cfg.training.seed);
  TrainingLog log = train_policy(cfg, *env, policy, cfg.training);
  EvalReport eval = final_evaluation(cfg, *env, policy);
  return {std::move(policy), std::move(log), std::move(eval)};
}

namespace {

void write_run(const fs::path& dir, const TrainOutcome& out) {
  fs::create_directories(dir);
  save_checkpoint((dir / "policy.txt").string(), out.policy);
  {
    auto os = open_out(dir / "training_log.csv");
    write_training_log(os, out.log);
  }
  write_eval_csv(dir / "eval.csv", {out.eval});
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  TrainOutcome out = run_experiment(cfg);
  write_run(out_dir, out);
  return out;
}

EvalReport cmd_evaluate(const std::string& checkpoint, const ExperimentConfig& cfg, long n_trials, std::uint64_t seed) {
  const MlpPolicy policy = load_checkpoint(checkpoint);
  const auto env = make_environment(cfg.env);
  if (policy.state_dim() != env->state_dim() || policy.action_count() != env->action_count()) {
    throw IncompatibleError("checkpoint " + checkpoint + " expects state_dim " + std::to_string(policy.state_dim()) +
                            " and " + std::to_string(policy.action_count()) + " actions; environment has " +
                            std::to_string(env->state_dim()) + " and " + std::to_string(env->action_count()));
  }
  ExperimentConfig c = cfg;
  c.final_eval_trials = n_trials;
  c.training.seed = seed;
  return final_evaluation(c, *env, policy);
}

// ---------------------------------------------------------------------------

SweepSpec SweepSpec::from(const KeyValueConfig& kv) {
  SweepSpec spec;
  const std::string prefix = "sweep.param.";
  for (const auto& [key, value] : kv.values()) {
    if (key.rfind("sweep.", 0) != 0) {
      spec.base.set(key, value);
      continue;
    }
    if (key.rfind(prefix, 0) == 0) {
      const std::string path = key.substr(prefix.size());
      auto values = split_list(kv.get_string(key, ""));
      if (path.empty()) throw ConfigError(key + ": missing parameter path");
      if (values.empty()) throw ConfigError(key + ": empty value list");
      spec.params.emplace_back(path, std::move(values));
    } else if (key == "sweep.seeds") {
      spec.seeds.clear();
      for (int s : kv.get_int_list(key, {})) {
        if (s < 0) throw ConfigError("sweep.seeds must be non-negative");
        spec.seeds.push_back(static_cast<std::uint64_t>(s));
      }
      if (spec.seeds.empty()) throw ConfigError("sweep.seeds: empty value list");
    } else if (key == "sweep.budget") {
      spec.budget = kv.get_int(key, spec.budget);
    } else if (key == "sweep.threads") {
      spec.threads = static_cast<int>(kv.get_int(key, spec.threads));
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  if (spec.budget < 1) throw ConfigError("sweep.budget must be positive");
  if (spec.threads < 0) throw ConfigError("sweep.threads must be >= 0");
  if (spec.total_runs() > spec.budget) {
    throw ConfigError("sweep has " + std::to_string(spec.total_runs()) + " runs, exceeding sweep.budget=" +
                      std::to_string(spec.budget));
  }
  return spec;
}

long SweepSpec::total_runs() const {
  long n = static_cast<long>(seeds.size());
  for (const auto& p : params) n *= static_cast<long>(p.second.size());
  return n;
}

KeyValueConfig SweepSpec::run_config(long index) const {
  long per_seed = 1;
  for (const auto& p : params) per_seed *= static_cast<long>(p.second.size());
  KeyValueConfig kv = base;
  kv.set("training.seed", std::to_string(seeds.at(static_cast<std::size_t>(index / per_seed))));
  long rem = index % per_seed;
  for (auto it = params.rbegin(); it != params.rend(); ++it) {
    const long n = static_cast<long>(it->second.size());
    kv.set(it->first, it->second[static_cast<std::size_t>(rem % n)]);
    rem /= n;
  }
  return kv;
}

long SweepResult::failures() const {
  return std::count_if(runs.begin(), runs.end(), [](const SweepRun& r) { return !r.ok; });
}

namespace {

bool named_by_descriptor(const std::string& key) {
  return key == "learner.method" || key == "learner.zeta" || key == "learner.alpha" || key == "learner.beta" ||
         key == "learner.tamar.var" || key == "learner.xie.lambda";
}

}  // namespace

SweepResult cmd_sweep(const SweepSpec& spec, const std::string& out_dir) {
  const long n = spec.total_runs();
  SweepResult result;
  result.runs.resize(static_cast<std::size_t>(n));
  fs::create_directories(out_dir);

  auto run_one = [&](long i) {
    SweepRun& run = result.runs[static_cast<std::size_t>(i)];
    run.index = i;
    const KeyValueConfig kv = spec.run_config(i);
    run.label = "run " + std::to_string(i);
    try {
      ExperimentConfig cfg = experiment_from(kv);
      if (cfg.label.empty()) {
        std::string label = learner_descriptor(cfg.learner);
        for (const auto& p : spec.params) {
          if (!named_by_descriptor(p.first)) label += " " + p.first + "=" + kv.get_string(p.first, "");
        }
        cfg.label = label + " seed=" + std::to_string(cfg.training.seed);
      }
      run.label = cfg.label;
      char name[32];
      std::snprintf(name, sizeof(name), "run_%04ld", i);
      const TrainOutcome out = run_experiment(cfg);
      write_run(fs::path(out_dir) / name, out);
      run.report = out.eval;
      run.ok = true;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  };

  int threads = spec.threads > 0 ? spec.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<long>(threads, n));
  if (threads <= 1) {
    for (long i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (long i = next++; i < n; i = next++) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<EvalReport> rows;
  for (const auto& r : result.runs) {
    if (r.ok) rows.push_back(r.report);
  }
  write_eval_csv(fs::path(out_dir) / "sweep.csv", rows);
  auto fos = open_out(fs::path(out_dir) / "failures.csv");
  fos << "index,label,error\n";
  for (const auto& r : result.runs) {
    if (!r.ok) fos << r.index << ',' << csv_escape(r.label) << ',' << csv_escape(r.error) << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<FrontierPoint> cmd_frontier(const std::string& csv_path, const std::string& out_dir, bool emit_svg) {
  std::ifstream is(csv_path);
  if (!is) throw DataError("cannot open " + csv_path);
  const auto rows = read_eval_csv(is);
  std::vector<FrontierPoint> points;
  for (const auto& r : rows) {
    if (!std::isfinite(r.var) || !std::isfinite(r.cr)) throw DataError("row '" + r.label + "' has a non-finite cr or var");
    points.push_back({r.label, r.var, r.cr, false});
  }
  pareto_filter(points);

  fs::create_directories(out_dir);
  std::vector<EvalReport> kept;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!points[i].dominated) kept.push_back(rows[i]);
  }
  write_eval_csv(fs::path(out_dir) / "frontier.csv", kept);
  if (emit_svg) {
    auto os = open_out(fs::path(out_dir) / "frontier.svg");
    os << frontier_svg(points);
  }
  return points;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

}  // namespace

std::string frontier_svg(const std::vector<FrontierPoint>& points) {
  const double width = 640, height = 480, left = 70, right = 20, top = 20, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.var);
    x1 = std::max(x1, p.var);
    y0 = std::min(y0, p.cr);
    y1 = std::max(y1, p.cr);
  }
  if (points.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double m = span > 0.0 ? 0.05 * span : std::max(1.0, std::abs(lo) * 0.1);
    lo -= m;
    hi += m;
  };
  pad(x0, x1);
  pad(y0, y1);
  auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * (width - left - right); };
  auto sy = [&](double v) { return height - bottom - (v - y0) / (y1 - y0) * (height - top - bottom); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n"
     << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
     << height - bottom << "\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom << "\"/>\n"
     << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = x0 + (x1 - x0) * k / 4.0;
    const double vy = y0 + (y1 - y0) * k / 4.0;
    os << "<text x=\"" << fmt("%.1f", sx(vx)) << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">"
       << fmt("%.3g", vx) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.1f", sy(vy) + 4) << "\" text-anchor=\"end\">"
       << fmt("%.3g", vy) << "</text>\n";
  }
  os << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">Var</text>\n"
     << "<text x=\"18\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (top + height - bottom) / 2 << ")\">CR</text>\n</g>\n<g>\n";
  for (const auto& p : points) {
    os << "<circle cx=\"" << fmt("%.2f", sx(p.var)) << "\" cy=\"" << fmt("%.2f", sy(p.cr)) << "\" r=\"5\" "
       << (p.dominated ? "fill=\"none\" stroke=\"#555555\"" : "fill=\"#1f5fbf\" stroke=\"#1f5fbf\"")
       << " stroke-width=\"1.5\"><title>" << xml_escape(p.label) << "</title></circle>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------

WalkforwardResult run_walkforward(const ExperimentConfig& cfg, const ReturnsMatrix& data) {
  const auto& wf = cfg.walkforward;
  const auto& ds = cfg.env.dataset;
  const Index months = data.months();
  const bool learner = wf.strategy == WalkforwardSpec::Strategy::Learner;
  const Index required = ds.lookback + wf.test_months + (learner ? ds.episode_len : 0);
  if (months < required) {
    throw ConfigError("walkforward needs at least " + std::to_string(required) + " months (lookback " +
                      std::to_string(ds.lookback) + (learner ? " + episode_len " + std::to_string(ds.episode_len) : "") +
                      " + test_months " + std::to_string(wf.test_months) + "), dataset has " + std::to_string(months));
  }
  if (learner && wf.train_window < ds.episode_len) {
    throw ConfigError("walkforward.train_window must be >= env.dataset.episode_len");
  }
  if (wf.test_months < 2) throw ConfigError("walkforward.test_months must be >= 2");

  const std::shared_ptr<const ReturnsMatrix> shared(&data, [](const ReturnsMatrix*) {});
  const Index first_test = months - wf.test_months;
  std::unique_ptr<MlpPolicy> policy;

  WalkforwardResult out;
  for (Index m = first_test; m < months; ++m) {
    VecX w;
    if (learner) {
      DatasetPortfolioConfig dc = ds;
      dc.first_start = std::max<Index>(ds.lookback, m - wf.train_window);
      dc.last_start = m - ds.episode_len;
      const DatasetPortfolioEnv env(shared, dc);
      if (!policy) policy = std::make_unique<MlpPolicy>(policy_dims(cfg, env), cfg.training.seed);
      TrainOptions opt = cfg.training;
      opt.episodes = wf.train_episodes;
      opt.eval_every = 0;
      opt.stream_offset = static_cast<std::uint64_t>(m - first_test) * static_cast<std::uint64_t>(wf.train_episodes);
      train_policy(cfg, env, *policy, opt);
      w = policy->action_probs(returns_window(data, m, ds.lookback));
    } else {
      w = VecX::Constant(data.assets(), 1.0 / static_cast<double>(data.assets()));
    }
    out.dates.push_back(data.dates[static_cast<std::size_t>(m)]);
    out.returns.push_back(portfolio_return(data, m, w));
    out.weights.push_back(std::move(w));
  }
  SummaryOptions so;
  so.annualization = std::sqrt(12.0);
  out.summary = summarize(out.returns, so);
  out.summary.label = learner ? "walkforward " + run_label(cfg) : "walkforward ew";
  return out;
}

WalkforwardResult cmd_walkforward(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.env.kind != EnvSpec::Kind::Dataset) throw ConfigError("walkforward requires env.type=dataset");
  const auto data = load_dataset(cfg.env);
  WalkforwardResult res = run_walkforward(cfg, *data);
  fs::create_directories(out_dir);
  auto os = open_out(fs::path(out_dir) / "walkforward.csv");
  os << "date,return";
  for (const auto& name : data->asset_names) os << ',' << csv_escape("w_" + name);
  os << '\n';
  for (std::size_t i = 0; i < res.returns.size(); ++i) {
    os << res.dates[i] << ',' << format_real(res.returns[i]);
    for (Index j = 0; j < res.weights[i].size(); ++j) os << ',' << format_real(res.weights[i][j]);
    os << '\n';
  }
  write_eval_csv(fs::path(out_dir) / "walkforward_summary.csv", {res.summary});
  return res;
}

}  // namespace equm
