#include "equm/environments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace equm {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

// ===========================================================================

void PortfolioSynthConfig::validate() const {
  require(is_probability(p_switch), "env.portfolio_synth.p_switch must lie in [0, 1]");
  require(is_probability(p_risk), "env.portfolio_synth.p_risk must lie in [0, 1]");
  require(r_nl_low < r_nl_high, "env.portfolio_synth.r_nl_low must be below r_nl_high");
  require(maturity_W >= 1, "env.portfolio_synth.maturity_W must be positive");
  require(fraction_w > 0.0 && fraction_w <= 1.0, "env.portfolio_synth.fraction_w must lie in (0, 1]");
  require(capital_M > 0.0, "env.portfolio_synth.capital_M must be positive");
  require(horizon_T >= 1, "env.portfolio_synth.horizon_T must be positive");
  require(horizon_cap == 0 || horizon_cap >= horizon_T, "env.portfolio_synth.horizon_cap must be >= horizon_T");
}

double PortfolioState::wealth() const {
  double w = liquid;
  for (const auto& p : pending) w += p.size;
  return w;
}

namespace {

class PortfolioEpisode final : public Episode {
 public:
  PortfolioEpisode(const PortfolioSynthEnv& env, PortfolioState s) : env_(env), s_(std::move(s)) {}

  VecX observe() const override { return env_.observe(s_); }

  StepResult step(int action, RngStream& rng) override {
    const auto& c = env_.config();
    return env_.advance(
        s_, action, [&](const PortfolioState::Position&) { return rng.bernoulli(c.p_risk); },
        [&] { return rng.bernoulli(c.p_switch); });
  }

 private:
  const PortfolioSynthEnv& env_;
  PortfolioState s_;
};

}  // namespace

PortfolioSynthEnv::PortfolioSynthEnv(PortfolioSynthConfig config) : cfg_(config) { cfg_.validate(); }

PortfolioState PortfolioSynthEnv::initial_state(bool high_rate) const {
  PortfolioState s;
  s.liquid = cfg_.capital_M;
  s.high_rate = high_rate;
  return s;
}

std::unique_ptr<Episode> PortfolioSynthEnv::reset(RngStream& rng) const {
  return std::make_unique<PortfolioEpisode>(*this, initial_state(rng.bernoulli(0.5)));
}

VecX PortfolioSynthEnv::observe(const PortfolioState& s) const {
  VecX obs = VecX::Zero(state_dim());
  const double wealth = s.wealth();
  const double scale = wealth > 0.0 ? 1.0 / wealth : 0.0;
  Index k = 0;
  if (cfg_.observe_time) obs[k++] = static_cast<double>(s.t) / cfg_.horizon_T;
  obs[k++] = s.liquid * scale;
  obs[k++] = s.high_rate ? 1.0 : 0.0;
  for (const auto& p : s.pending) {
    const int ttm = p.maturity_time - s.t;
    if (ttm >= 0 && ttm < cfg_.maturity_W) obs[k + ttm] += p.size * scale;
  }
  return obs;
}

double PortfolioSynthEnv::scripted_return(const std::vector<int>& actions, Scenario scenario) const {
  const bool all_default = scenario == Scenario::AllDefault;
  PortfolioState s = initial_state(!all_default);
  double total = 0.0;
  for (int a : actions) {
    const StepResult r = advance(
        s, a, [&](const PortfolioState::Position&) { return all_default; }, [] { return false; });
    total += r.reward;
    if (r.terminal) break;
  }
  return total;
}

// ===========================================================================

void OptionEnvConfig::validate() const {
  require(maturity >= 1, "env.option.maturity must be positive");
  require(is_probability(p_up), "env.option.p_up must lie in [0, 1]");
  require(f_up > 1.0, "env.option.f_up must exceed 1");
  require(f_down > 0.0 && f_down < 1.0, "env.option.f_down must lie in (0, 1)");
  require(x0 > 0.0, "env.option.x0 must be positive");
  require(horizon_cap == 0 || horizon_cap > maturity, "env.option.horizon_cap must exceed maturity");
}

namespace {

class OptionEpisode final : public Episode {
 public:
  explicit OptionEpisode(const OptionEnv& env) : env_(env), x_(env.config().x0) {}

  VecX observe() const override {
    VecX s(2);
    s << x_, static_cast<double>(t_) / env_.config().maturity;
    return s;
  }

  StepResult step(int action, RngStream& rng) override {
    const auto& c = env_.config();
    if (action == kExercise || t_ >= c.maturity) return {env_.payoff(x_), true};
    x_ *= rng.bernoulli(c.p_up) ? c.f_up : c.f_down;
    ++t_;
    return {0.0, false};
  }

 private:
  const OptionEnv& env_;
  double x_;
  int t_ = 0;
};

}  // namespace

OptionEnv::OptionEnv(OptionEnvConfig config) : cfg_(config) { cfg_.validate(); }

std::unique_ptr<Episode> OptionEnv::reset(RngStream&) const { return std::make_unique<OptionEpisode>(*this); }

double OptionEnv::payoff(double price) const {
  return std::max(0.0, cfg_.strike_put - price) + std::max(0.0, price - cfg_.strike_call);
}

// ===========================================================================

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

ReturnsMatrix parse_returns_csv(std::istream& is, const CsvFormatSpec& spec, const std::string& source) {
  auto fail = [&](long line_no, const std::string& msg) -> DataError {
    return DataError(source + ": row " + std::to_string(line_no) + ": " + msg);
  };

  CsvFormatSpec::Units units = spec.units;
  std::vector<std::string> header;
  int date_col = -1;
  std::vector<int> asset_cols;
  std::vector<int> dates;
  std::vector<double> values;
  ReturnsMatrix out;

  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      // header metadata, e.g. "# units: percent"
      std::string meta = trim(t.substr(1));
      const auto sep = meta.find_first_of(":=");
      if (sep != std::string::npos && trim(meta.substr(0, sep)) == "units" && units == CsvFormatSpec::Units::Auto) {
        const std::string v = trim(meta.substr(sep + 1));
        if (v == "percent") {
          units = CsvFormatSpec::Units::Percent;
        } else if (v == "fraction") {
          units = CsvFormatSpec::Units::Fraction;
        } else {
          throw fail(line_no, "unknown units '" + v + "'");
        }
      }
      continue;
    }
    const auto fields = split_csv(t);
    if (header.empty()) {
      header = fields;
      for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        if (header[i] == spec.date_column) {
          date_col = i;
        } else {
          asset_cols.push_back(i);
          out.asset_names.push_back(header[i]);
        }
      }
      if (date_col < 0) throw fail(line_no, "date column '" + spec.date_column + "' not found in header");
      if (asset_cols.empty()) throw fail(line_no, "no asset columns in header");
      continue;
    }
    if (fields.size() != header.size()) {
      throw fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    double date_value = 0.0;
    if (!parse_double(fields[date_col], date_value) || date_value != std::floor(date_value)) {
      throw fail(line_no, "malformed date '" + fields[date_col] + "' (expected YYYYMM)");
    }
    const int date = static_cast<int>(date_value);
    const int month = date % 100;
    if (date < 100 || month < 1 || month > 12) throw fail(line_no, "malformed date '" + fields[date_col] + "' (expected YYYYMM)");
    if ((spec.window_from != 0 && date < spec.window_from) || (spec.window_to != 0 && date > spec.window_to)) continue;
    if (!dates.empty() && date <= dates.back()) {
      throw fail(line_no, "date " + std::to_string(date) + " does not increase (previous " + std::to_string(dates.back()) + ")");
    }

    std::vector<double> row;
    bool drop = false;
    for (std::size_t k = 0; k < asset_cols.size(); ++k) {
      const int c = asset_cols[k];
      double v = 0.0;
      if (!parse_double(fields[c], v)) throw fail(line_no, "column '" + header[c] + "': malformed value '" + fields[c] + "'");
      for (double s : spec.sentinel_values) {
        if (std::abs(v - s) < 1e-9) {
          if (spec.sentinel_policy == CsvFormatSpec::SentinelPolicy::Reject) {
            throw fail(line_no, "column '" + header[c] + "': missing-value sentinel " + fields[c]);
          }
          drop = true;
        }
      }
      row.push_back(v);
    }
    if (drop) continue;
    dates.push_back(date);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (header.empty()) throw DataError(source + ": no header row");
  if (dates.empty()) throw DataError(source + ": no data rows");

  out.dates = std::move(dates);
  out.returns = Eigen::Map<MatX>(values.data(), static_cast<Index>(out.dates.size()), static_cast<Index>(asset_cols.size()));
  if (units == CsvFormatSpec::Units::Percent) out.returns /= 100.0;
  return out;
}

ReturnsMatrix load_returns_csv(const std::string& path, const CsvFormatSpec& spec) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open returns file " + path);
  return parse_returns_csv(is, spec, path);
}

VecX returns_window(const ReturnsMatrix& data, Index month, int lookback) {
  if (month < lookback || month > data.months()) {
    throw ConfigError("returns window ending before month index " + std::to_string(month) + " needs " +
                      std::to_string(lookback) + " months of history");
  }
  VecX s(static_cast<Index>(lookback) * data.assets());
  for (int k = 0; k < lookback; ++k) s.segment(k * data.assets(), data.assets()) = data.returns.row(month - lookback + k).transpose();
  return s;
}

double portfolio_return(const ReturnsMatrix& data, Index month, const VecX& weights) {
  if (weights.size() != data.assets()) throw IncompatibleError("weight vector length does not match asset count");
  return data.returns.row(month).dot(weights);
}

// ---------------------------------------------------------------------------

DatasetPortfolioEnv::DatasetPortfolioEnv(std::shared_ptr<const ReturnsMatrix> data, DatasetPortfolioConfig config)
    : data_(std::move(data)), cfg_(config) {
  require(data_ != nullptr, "dataset environment needs data");
  require(cfg_.lookback >= 1 && cfg_.episode_len >= 1, "env.dataset.lookback and episode_len must be positive");
  if (cfg_.first_start < 0) cfg_.first_start = cfg_.lookback;
  if (cfg_.last_start < 0) cfg_.last_start = data_->months() - cfg_.episode_len;
  if (cfg_.first_start < cfg_.lookback || cfg_.last_start + cfg_.episode_len > data_->months() ||
      cfg_.first_start > cfg_.last_start) {
    throw ConfigError("env.dataset: lookback " + std::to_string(cfg_.lookback) + " + episode_len " +
                      std::to_string(cfg_.episode_len) + " exceeds the " + std::to_string(data_->months()) +
                      " months available");
  }
}

std::unique_ptr<Episode> DatasetPortfolioEnv::reset(RngStream& rng) const {
  const Index span = cfg_.last_start - cfg_.first_start + 1;
  const Index start = cfg_.first_start + std::min<Index>(static_cast<Index>(rng.uniform() * span), span - 1);
  return start_at(start);
}

std::unique_ptr<Episode> DatasetPortfolioEnv::start_at(Index month) const {
  if (month < cfg_.lookback || month + cfg_.episode_len > data_->months()) {
    throw ConfigError("dataset episode starting at month index " + std::to_string(month) + " leaves the data range");
  }
  return std::make_unique<DatasetEpisode>(*this, month);
}

VecX DatasetEpisode::observe() const { return returns_window(env_.data(), month_, env_.config().lookback); }

StepResult DatasetEpisode::step(int action, RngStream&) {
  VecX w = VecX::Zero(env_.data().assets());
  w[action] = 1.0;
  return step_weights(w);
}

StepResult DatasetEpisode::step_weights(const VecX& weights) {
  const double y = portfolio_return(env_.data(), month_, weights);
  ++month_;
  return {y, month_ - start_ >= env_.config().episode_len};
}

std::vector<int> dataset_layer_dims(int assets, int lookback) { return {assets * lookback, 100, 50, assets}; }

}  // namespace equm
