#include "equm/config.hpp"

#include "equm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>

namespace equm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    const std::string item = trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::istream& is, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value, found '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.has(key)) throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    cfg.values_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse(is, path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::optional<std::string> KeyValueConfig::lookup(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return lookup(key).value_or(fallback);
}

double KeyValueConfig::get_real(const std::string& key, double fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  try {
    const double x = parse_real(*v);
    if (std::isnan(x)) throw DataError("nan");
    return x;
  } catch (const DataError&) {
    throw ConfigError(key + ": expected a number, found '" + *v + "'");
  }
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::size_t pos = 0;
  long x = 0;
  try {
    x = std::stol(*v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v->size()) throw ConfigError(key + ": expected an integer, found '" + *v + "'");
  return x;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(key + ": expected true or false, found '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_real_list(const std::string& key, const std::vector<double>& fallback) const {
  const auto v = lookup(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) {
    try {
      out.push_back(parse_real(item));
    } catch (const DataError&) {
      throw ConfigError(key + ": expected a list of numbers, found '" + *v + "'");
    }
  }
  return out;
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto reals = get_real_list(key, {});
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (double x : reals) {
    if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError(key + ": expected a list of integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

void KeyValueConfig::reject_unused(const std::vector<std::string>& ignored_prefixes) const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (used_.count(key)) continue;
    bool ignored = false;
    for (const auto& p : ignored_prefixes) ignored = ignored || key.rfind(p, 0) == 0;
    if (ignored) continue;
    unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
}

// ---------------------------------------------------------------------------

std::string method_name(LearnerSpec::Method m) {
  switch (m) {
    case LearnerSpec::Method::Reinforce: return "reinforce";
    case LearnerSpec::Method::Equm: return "equm";
    case LearnerSpec::Method::Tamar: return "tamar";
    case LearnerSpec::Method::Xie: return "xie";
    case LearnerSpec::Method::EqumAc: return "equm_ac";
  }
  return "?";
}

std::string learner_descriptor(const LearnerSpec& l) {
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", x);
    return std::string(buf);
  };
  const std::string name = method_name(l.method);
  switch (l.method) {
    case LearnerSpec::Method::Reinforce: return name;
    case LearnerSpec::Method::Equm:
    case LearnerSpec::Method::EqumAc:
      return l.utility.alpha == 1.0 ? name + " zeta=" + num(l.utility.zeta())
                                    : name + " alpha=" + num(l.utility.alpha) + " beta=" + num(l.utility.beta);
    case LearnerSpec::Method::Tamar: return name + " var=" + num(l.tamar.var_target);
    case LearnerSpec::Method::Xie: return name + " lambda=" + num(l.xie.lambda);
  }
  return name;
}

namespace {

void read_portfolio(const KeyValueConfig& kv, PortfolioSynthConfig& c) {
  const std::string p = "env.portfolio_synth.";
  c.r_liquid = kv.get_real(p + "r_liquid", c.r_liquid);
  c.r_nl_low = kv.get_real(p + "r_nl_low", c.r_nl_low);
  c.r_nl_high = kv.get_real(p + "r_nl_high", c.r_nl_high);
  c.p_switch = kv.get_real(p + "p_switch", c.p_switch);
  c.p_risk = kv.get_real(p + "p_risk", c.p_risk);
  c.maturity_W = static_cast<int>(kv.get_int(p + "maturity_W", c.maturity_W));
  c.fraction_w = kv.get_real(p + "fraction_w", c.fraction_w);
  c.capital_M = kv.get_real(p + "capital_M", c.capital_M);
  c.horizon_T = static_cast<int>(kv.get_int(p + "horizon_T", c.horizon_T));
  c.horizon_cap = static_cast<int>(kv.get_int(p + "horizon_cap", c.horizon_cap));
  c.compounding = kv.get_bool(p + "compounding", c.compounding);
  c.lock_rate = kv.get_bool(p + "lock_rate", c.lock_rate);
  c.settle_end_of_period = kv.get_bool(p + "settle_end_of_period", c.settle_end_of_period);
  c.cash_flow_reward = kv.get_bool(p + "cash_flow_reward", c.cash_flow_reward);
  c.observe_time = kv.get_bool(p + "observe_time", c.observe_time);
  c.validate();
}

void read_option(const KeyValueConfig& kv, OptionEnvConfig& c) {
  const std::string p = "env.option.";
  c.strike_call = kv.get_real(p + "strike_call", c.strike_call);
  c.strike_put = kv.get_real(p + "strike_put", c.strike_put);
  c.maturity = static_cast<int>(kv.get_int(p + "maturity", c.maturity));
  c.x0 = kv.get_real(p + "x0", c.x0);
  c.p_up = kv.get_real(p + "p_up", c.p_up);
  c.f_up = kv.get_real(p + "f_up", c.f_up);
  c.f_down = kv.get_real(p + "f_down", c.f_down);
  c.horizon_cap = static_cast<int>(kv.get_int(p + "horizon_cap", c.horizon_cap));
  c.validate();
}

void read_dataset(const KeyValueConfig& kv, EnvSpec& e, bool require_path) {
  const std::string p = "env.dataset.";
  e.dataset_path = kv.get_string(p + "path", "");
  if (require_path) {
    if (e.dataset_path.empty()) throw ConfigError(p + "path is required for env.type=dataset");
    if (!std::filesystem::is_regular_file(e.dataset_path)) {
      throw ConfigError(p + "path: file not found: " + e.dataset_path);
    }
  }
  const std::string units = kv.get_string(p + "units", "auto");
  if (units == "auto") {
    e.csv.units = CsvFormatSpec::Units::Auto;
  } else if (units == "percent") {
    e.csv.units = CsvFormatSpec::Units::Percent;
  } else if (units == "fraction") {
    e.csv.units = CsvFormatSpec::Units::Fraction;
  } else {
    throw ConfigError(p + "units must be auto, percent or fraction, found '" + units + "'");
  }
  e.csv.date_column = kv.get_string(p + "date_column", e.csv.date_column);
  e.csv.sentinel_values = kv.get_real_list(p + "sentinels", e.csv.sentinel_values);
  const std::string policy = kv.get_string(p + "sentinel_policy", "reject");
  if (policy == "reject") {
    e.csv.sentinel_policy = CsvFormatSpec::SentinelPolicy::Reject;
  } else if (policy == "drop_row") {
    e.csv.sentinel_policy = CsvFormatSpec::SentinelPolicy::DropRow;
  } else {
    throw ConfigError(p + "sentinel_policy must be reject or drop_row, found '" + policy + "'");
  }
  e.csv.window_from = static_cast<int>(kv.get_int(p + "window_from", 0));
  e.csv.window_to = static_cast<int>(kv.get_int(p + "window_to", 0));
  e.dataset.lookback = static_cast<int>(kv.get_int(p + "lookback", e.dataset.lookback));
  e.dataset.episode_len = static_cast<int>(kv.get_int(p + "episode_len", e.dataset.episode_len));
  if (e.dataset.lookback < 1) throw ConfigError(p + "lookback must be positive");
  if (e.dataset.episode_len < 1) throw ConfigError(p + "episode_len must be positive");
}

}  // namespace

ExperimentConfig experiment_from(const KeyValueConfig& kv) {
  ExperimentConfig cfg;

  const std::string type = kv.get_string("env.type", "portfolio_synth");
  if (type == "portfolio_synth") {
    cfg.env.kind = EnvSpec::Kind::PortfolioSynth;
  } else if (type == "option") {
    cfg.env.kind = EnvSpec::Kind::Option;
  } else if (type == "dataset") {
    cfg.env.kind = EnvSpec::Kind::Dataset;
  } else {
    throw ConfigError("env.type must be portfolio_synth, option or dataset, found '" + type + "'");
  }
  read_portfolio(kv, cfg.env.portfolio);
  read_option(kv, cfg.env.option);
  read_dataset(kv, cfg.env, cfg.env.kind == EnvSpec::Kind::Dataset);

  auto& l = cfg.learner;
  const std::string method = kv.get_string("learner.method", "reinforce");
  if (method == "reinforce") {
    l.method = LearnerSpec::Method::Reinforce;
  } else if (method == "equm") {
    l.method = LearnerSpec::Method::Equm;
  } else if (method == "tamar") {
    l.method = LearnerSpec::Method::Tamar;
  } else if (method == "xie") {
    l.method = LearnerSpec::Method::Xie;
  } else if (method == "equm_ac") {
    l.method = LearnerSpec::Method::EqumAc;
  } else {
    throw ConfigError("learner.method must be reinforce, equm, tamar, xie or equm_ac, found '" + method + "'");
  }
  if (kv.has("learner.zeta") && (kv.has("learner.alpha") || kv.has("learner.beta"))) {
    throw ConfigError("learner.zeta and learner.alpha/learner.beta are mutually exclusive");
  }
  if (kv.has("learner.zeta")) {
    l.utility = UtilitySpec::from_zeta(kv.get_real("learner.zeta", 0.0));
  } else {
    l.utility.alpha = kv.get_real("learner.alpha", 1.0);
    l.utility.beta = kv.get_real("learner.beta", 0.0);
  }
  l.utility.validate();
  l.hidden = kv.get_int_list("learner.hidden", {});
  for (int h : l.hidden) {
    if (h < 1) throw ConfigError("learner.hidden widths must be positive");
  }

  l.tamar.var_target = kv.get_real("learner.tamar.var", l.tamar.var_target);
  l.tamar.delta = kv.get_real("learner.tamar.delta", l.tamar.delta);
  const std::string penalty = kv.get_string("learner.tamar.penalty", "linear");
  if (penalty == "linear") {
    l.tamar.penalty = TamarConfig::Penalty::Linear;
  } else if (penalty == "quadratic") {
    l.tamar.penalty = TamarConfig::Penalty::Quadratic;
  } else {
    throw ConfigError("learner.tamar.penalty must be linear or quadratic, found '" + penalty + "'");
  }
  l.tamar.one_sided = kv.get_bool("learner.tamar.one_sided", l.tamar.one_sided);
  l.tamar.tracker_rate = kv.get_real("learner.tamar.tracker_rate", l.tamar.tracker_rate);
  l.tamar.validate();

  l.xie.lambda = kv.get_real("learner.xie.lambda", l.xie.lambda);
  l.xie.tracker_rate = kv.get_real("learner.xie.tracker_rate", l.xie.tracker_rate);
  l.xie.validate();

  l.ac.n_step = static_cast<int>(kv.get_int("learner.ac.n_step", l.ac.n_step));
  l.ac.critic_hidden = kv.get_int_list("learner.ac.critic_hidden", l.ac.critic_hidden);
  l.ac.critic_adam.learning_rate = kv.get_real("learner.ac.critic_lr", l.ac.critic_adam.learning_rate);
  l.ac.validate();

  auto& t = cfg.training;
  t.episodes = kv.get_int("training.episodes", t.episodes);
  t.batch = static_cast<int>(kv.get_int("training.batch", t.batch));
  const long seed = kv.get_int("training.seed", static_cast<long>(t.seed));
  if (seed < 0) throw ConfigError("training.seed must be non-negative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.eval_every = kv.get_int("training.eval_every", t.eval_every);
  t.eval_trials = kv.get_int("training.eval_trials", t.eval_trials);
  t.adam.learning_rate = kv.get_real("training.lr", t.adam.learning_rate);
  t.adam.weight_decay = kv.get_real("training.weight_decay", t.adam.weight_decay);
  t.adam.decoupled = kv.get_bool("training.decoupled_weight_decay", t.adam.decoupled);
  t.mean_baseline = kv.get_bool("training.mean_baseline", t.mean_baseline);
  t.baseline_rate = kv.get_real("training.baseline_rate", t.baseline_rate);
  t.discount = kv.get_real("training.discount", t.discount);
  t.validate();
  if (!(t.adam.learning_rate > 0.0)) throw ConfigError("training.lr must be positive");
  if (!(t.adam.weight_decay >= 0.0)) throw ConfigError("training.weight_decay must be non-negative");
  if (!(t.baseline_rate > 0.0 && t.baseline_rate <= 1.0)) throw ConfigError("training.baseline_rate must lie in (0, 1]");
  cfg.final_eval_trials = kv.get_int("training.final_eval_trials", cfg.final_eval_trials);
  if (cfg.final_eval_trials < 2) throw ConfigError("training.final_eval_trials must be >= 2");

  auto& w = cfg.walkforward;
  w.test_months = static_cast<int>(kv.get_int("walkforward.test_months", w.test_months));
  w.train_window = static_cast<int>(kv.get_int("walkforward.train_window", w.train_window));
  w.train_episodes = kv.get_int("walkforward.train_episodes", w.train_episodes);
  const std::string strategy = kv.get_string("walkforward.strategy", "learner");
  if (strategy == "learner") {
    w.strategy = WalkforwardSpec::Strategy::Learner;
  } else if (strategy == "ew") {
    w.strategy = WalkforwardSpec::Strategy::EqualWeight;
  } else {
    throw ConfigError("walkforward.strategy must be learner or ew, found '" + strategy + "'");
  }
  if (w.test_months < 1) throw ConfigError("walkforward.test_months must be positive");
  if (w.train_window < 1) throw ConfigError("walkforward.train_window must be positive");
  if (w.train_episodes < 1) throw ConfigError("walkforward.train_episodes must be positive");

  cfg.output_dir = kv.get_string("output.dir", cfg.output_dir);
  cfg.emit_svg = kv.get_bool("output.emit_svg", cfg.emit_svg);
  cfg.label = kv.get_string("label", "");

  kv.reject_unused({"sweep."});
  return cfg;
}

std::shared_ptr<const ReturnsMatrix> load_dataset(const EnvSpec& spec) {
  return std::make_shared<const ReturnsMatrix>(load_returns_csv(spec.dataset_path, spec.csv));
}

std::shared_ptr<const Environment> make_environment(const EnvSpec& spec) {
  switch (spec.kind) {
    case EnvSpec::Kind::PortfolioSynth: return std::make_shared<PortfolioSynthEnv>(spec.portfolio);
    case EnvSpec::Kind::Option: return std::make_shared<OptionEnv>(spec.option);
    case EnvSpec::Kind::Dataset: return std::make_shared<DatasetPortfolioEnv>(load_dataset(spec), spec.dataset);
  }
  throw ConfigError("unknown environment kind");
}

std::vector<int> policy_dims(const ExperimentConfig& cfg, const Environment& env) {
  const int d = env.state_dim();
  const int a = env.action_count();
  if (!cfg.learner.hidden.empty()) {
    std::vector<int> dims{d};
    dims.insert(dims.end(), cfg.learner.hidden.begin(), cfg.learner.hidden.end());
    dims.push_back(a);
    return dims;
  }
  if (cfg.env.kind == EnvSpec::Kind::Dataset) return dataset_layer_dims(a, cfg.env.dataset.lookback);
  return synthetic_layer_dims(d, a);
}

}  // namespace equm
