#pragma once

#include "equm/core.hpp"
#include "equm/mdp.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace equm {

// ===========================================================================
// Synthetic liquid / non-liquid portfolio

struct PortfolioSynthConfig {
  double r_liquid = 1.001;  // gross per-period rate of the liquid asset
  double r_nl_low = 1.1;    // gross payout rate of a non-liquid position at maturity
  double r_nl_high = 2.0;
  double p_switch = 0.1;
  double p_risk = 0.05;
  int maturity_W = 4;
  double fraction_w = 0.2;
  double capital_M = 1.0;
  int horizon_T = 50;
  int horizon_cap = 0;  // 0 -> 10 * horizon_T
  // Proceeds (interest, matured principal + payout) are reinvested in the liquid pool.
  // When false, interest and payouts are paid out and only principal returns to the pool.
  bool compounding = true;
  // Payout rate fixed at investment time; when false the rate prevailing at maturity applies.
  bool lock_rate = true;
  // Matured proceeds land at the end of the period and can be reinvested from the next one.
  // When false they are settled before the period's investment decision.
  bool settle_end_of_period = true;
  // Investing is a cash outflow (reward -size) and maturity an inflow (size * rate), so
  // positions still pending at the horizon are forfeited. When false rewards are changes in
  // wealth with pending positions valued at principal.
  bool cash_flow_reward = true;
  // Prepend t/T to the observation.
  bool observe_time = false;

  void validate() const;
};

inline constexpr int kHold = 0;
inline constexpr int kInvest = 1;

/// Mutable portfolio state. Observation layout:
/// [t/T (only with observe_time), liquid share of wealth, high-rate indicator,
///  pending sizes by time-to-maturity 0..W-1 (share of wealth)].
struct PortfolioState {
  struct Position {
    int maturity_time;
    double size;
    double locked_rate;
  };

  int t = 0;
  double liquid = 0.0;
  bool high_rate = false;
  std::vector<Position> pending;

  double wealth() const;
};

class PortfolioSynthEnv final : public Environment {
 public:
  explicit PortfolioSynthEnv(PortfolioSynthConfig config = {});

  int action_count() const override { return 2; }
  int state_dim() const override { return (cfg_.observe_time ? 3 : 2) + cfg_.maturity_W; }
  int horizon_cap() const override { return cfg_.horizon_cap > 0 ? cfg_.horizon_cap : 10 * cfg_.horizon_T; }
  std::unique_ptr<Episode> reset(RngStream& rng) const override;

  const PortfolioSynthConfig& config() const { return cfg_; }

  PortfolioState initial_state(bool high_rate) const;
  VecX observe(const PortfolioState& s) const;

  /// Advances one period. `defaulted(position)` decides the default draw of each
  /// maturing position; `switch_rate()` decides the regime flip.
  template <typename DefaultDraw, typename SwitchDraw>
  StepResult advance(PortfolioState& s, int action, DefaultDraw&& defaulted, SwitchDraw&& switch_rate) const;

  enum class Scenario { AllDefault, AllHighNoDefault };

  /// Return of an action sequence under a fixed scenario; brackets every
  /// simulated return for the same actions.
  double scripted_return(const std::vector<int>& actions, Scenario scenario) const;

 private:
  PortfolioSynthConfig cfg_;
};

template <typename DefaultDraw, typename SwitchDraw>
StepResult PortfolioSynthEnv::advance(PortfolioState& s, int action, DefaultDraw&& defaulted,
                                      SwitchDraw&& switch_rate) const {
  const double rate_now = s.high_rate ? cfg_.r_nl_high : cfg_.r_nl_low;
  double reward = 0.0;

  auto settle = [&] {
    for (std::size_t i = 0; i < s.pending.size();) {
      const auto& p = s.pending[i];
      if (p.maturity_time != s.t) {
        ++i;
        continue;
      }
      if (defaulted(p)) {
        if (!cfg_.cash_flow_reward) reward -= p.size;
      } else {
        const double rate = cfg_.lock_rate ? p.locked_rate : rate_now;
        const double profit = p.size * (rate - 1.0);
        reward += cfg_.cash_flow_reward ? p.size + profit : profit;
        s.liquid += p.size + (cfg_.compounding ? profit : 0.0);
      }
      s.pending.erase(s.pending.begin() + static_cast<std::ptrdiff_t>(i));
    }
  };

  if (!cfg_.settle_end_of_period) settle();

  if (action == kInvest) {
    const double size = cfg_.fraction_w * s.liquid;
    s.liquid -= size;
    s.pending.push_back({s.t + cfg_.maturity_W, size, rate_now});
    if (cfg_.cash_flow_reward) reward -= size;
  }

  const double interest = s.liquid * (cfg_.r_liquid - 1.0);
  reward += interest;
  if (cfg_.compounding) s.liquid += interest;

  if (cfg_.settle_end_of_period) settle();

  if (switch_rate()) s.high_rate = !s.high_rate;
  ++s.t;
  return {reward, s.t >= cfg_.horizon_T};
}

// ===========================================================================
// American-style straddle (call + put) on a multiplicative binomial price

struct OptionEnvConfig {
  double strike_call = 1.5;
  double strike_put = 1.0;
  int maturity = 20;
  double x0 = 1.0;
  double p_up = 0.45;
  double f_up = 9.0 / 8.0;
  double f_down = 8.0 / 9.0;
  int horizon_cap = 0;  // 0 -> 10 * (maturity + 1)

  void validate() const;
};

inline constexpr int kContinue = 0;
inline constexpr int kExercise = 1;

/// State [x_t, t / maturity]. Exercise pays the straddle payoff and ends the
/// episode; at t == maturity the payoff is collected whatever the action.
class OptionEnv final : public Environment {
 public:
  explicit OptionEnv(OptionEnvConfig config = {});

  int action_count() const override { return 2; }
  int state_dim() const override { return 2; }
  int horizon_cap() const override { return cfg_.horizon_cap > 0 ? cfg_.horizon_cap : 10 * (cfg_.maturity + 1); }
  std::unique_ptr<Episode> reset(RngStream& rng) const override;

  const OptionEnvConfig& config() const { return cfg_; }
  double payoff(double price) const;

 private:
  OptionEnvConfig cfg_;
};

// ===========================================================================
// Historical returns

struct ReturnsMatrix {
  std::vector<std::string> asset_names;
  std::vector<int> dates;  // YYYYMM, strictly increasing
  MatX returns;            // months x assets, fractional units

  Index months() const { return returns.rows(); }
  Index assets() const { return returns.cols(); }
};

struct CsvFormatSpec {
  enum class Units { Auto, Percent, Fraction };
  enum class SentinelPolicy { Reject, DropRow };

  Units units = Units::Auto;  // Auto reads a "# units: percent|fraction" header line, default fraction
  std::string date_column = "date";
  std::vector<double> sentinel_values = {-99.99, -999.0};
  SentinelPolicy sentinel_policy = SentinelPolicy::Reject;
  int window_from = 0;  // YYYYMM, 0 = unbounded; rows outside the window are skipped
  int window_to = 0;
};

/// Throws DataError naming the offending row (1-based file line) and column.
ReturnsMatrix load_returns_csv(const std::string& path, const CsvFormatSpec& spec = {});
ReturnsMatrix parse_returns_csv(std::istream& is, const CsvFormatSpec& spec = {}, const std::string& source = "<stream>");

/// Past `lookback` months before `month`, oldest first, flattened month-major.
VecX returns_window(const ReturnsMatrix& data, Index month, int lookback);

/// sum_j y_{j,month} w_j
double portfolio_return(const ReturnsMatrix& data, Index month, const VecX& weights);

struct DatasetPortfolioConfig {
  int lookback = 12;
  int episode_len = 12;
  // Episodes start uniformly at months [first_start, last_start] (row indices).
  Index first_start = -1;  // -1 -> lookback
  Index last_start = -1;   // -1 -> months - episode_len
};

/// Episode over consecutive months. A sampled action j holds asset j for the
/// month, so the expected reward under pi equals the softmax-weighted portfolio return.
class DatasetPortfolioEnv final : public Environment {
 public:
  DatasetPortfolioEnv(std::shared_ptr<const ReturnsMatrix> data, DatasetPortfolioConfig config);

  int action_count() const override { return static_cast<int>(data_->assets()); }
  int state_dim() const override { return static_cast<int>(data_->assets()) * cfg_.lookback; }
  int horizon_cap() const override { return 10 * cfg_.episode_len; }
  std::unique_ptr<Episode> reset(RngStream& rng) const override;

  /// Episode pinned to a start month; used by tests and walk-forward evaluation.
  std::unique_ptr<Episode> start_at(Index month) const;

  const ReturnsMatrix& data() const { return *data_; }
  const DatasetPortfolioConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const ReturnsMatrix> data_;
  DatasetPortfolioConfig cfg_;
};

/// Episode over the dataset that also accepts a full weight vector.
class DatasetEpisode final : public Episode {
 public:
  DatasetEpisode(const DatasetPortfolioEnv& env, Index start) : env_(env), month_(start), start_(start) {}

  VecX observe() const override;
  StepResult step(int action, RngStream& rng) override;
  /// Weights must be nonnegative and sum to one.
  StepResult step_weights(const VecX& weights);

  Index month() const { return month_; }

 private:
  const DatasetPortfolioEnv& env_;
  Index month_;
  Index start_;
};

/// [assets * lookback, 100, 50, assets]
std::vector<int> dataset_layer_dims(int assets, int lookback);

}  // namespace equm
