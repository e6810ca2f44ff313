#include "equm/environments.hpp"
#include "equm/mdp.hpp"
#include "equm/policy.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

using namespace equm;

namespace {

// Fixed action sequence, replayed whatever the observation.
double run_actions(const Environment& env, const std::vector<int>& actions, RngStream& rng) {
  auto ep = env.reset(rng);
  double total = 0.0;
  for (int a : actions) {
    const StepResult r = ep->step(a, rng);
    total += r.reward;
    if (r.terminal) break;
  }
  return total;
}

ReturnsMatrix parse(const std::string& text, const CsvFormatSpec& spec = {}) {
  std::istringstream in(text);
  return parse_returns_csv(in, spec, "fixture");
}

std::string thrown_message(const std::string& text, const CsvFormatSpec& spec = {}) {
  try {
    parse(text, spec);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("always-hold compounds the liquid capital") {
  const PortfolioSynthEnv env;
  const std::vector<int> hold(50, kHold);
  const double expected = std::pow(1.001, 50) - 1.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    RngStream rng(seed, 5);
    CHECK(run_actions(env, hold, rng) == doctest::Approx(expected).epsilon(1e-13));
  }
  CHECK(env.scripted_return(hold, PortfolioSynthEnv::Scenario::AllDefault) ==
        doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("episode terminates at the horizon") {
  const PortfolioSynthEnv env;
  RngStream rng(4, 4);
  auto ep = env.reset(rng);
  int steps = 0;
  while (!ep->step(kInvest, rng).terminal) ++steps;
  CHECK(steps + 1 == 50);
  CHECK(env.state_dim() == 6);
  PortfolioSynthConfig c;
  c.observe_time = true;
  CHECK(PortfolioSynthEnv(c).state_dim() == 7);
}

TEST_CASE("certain default makes every investment a pure loss") {
  PortfolioSynthConfig c;
  c.p_risk = 1.0;
  const PortfolioSynthEnv env(c);
  const std::vector<int> invest(50, kInvest);
  const double first = env.scripted_return(invest, PortfolioSynthEnv::Scenario::AllDefault);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RngStream rng(seed, 9);
    CHECK(run_actions(env, invest, rng) == doctest::Approx(first).epsilon(1e-13));
  }
  CHECK(first < std::pow(1.001, 50) - 1.0);
  CHECK(first > -1.0);
}

TEST_CASE("simulated returns stay inside the scripted bounds") {
  const PortfolioSynthEnv env;
  RngStream pick(77, 1);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<int> actions(50);
    const double p_invest = pick.uniform();
    for (int& a : actions) a = pick.bernoulli(p_invest) ? kInvest : kHold;
    const double lo = env.scripted_return(actions, PortfolioSynthEnv::Scenario::AllDefault);
    const double hi = env.scripted_return(actions, PortfolioSynthEnv::Scenario::AllHighNoDefault);
    CHECK(lo <= hi);
    for (int k = 0; k < 5; ++k) {
      RngStream rng(rep, k);
      const double r = run_actions(env, actions, rng);
      CHECK(r >= lo - 1e-12);
      CHECK(r <= hi + 1e-12);
    }
  }
}

TEST_CASE("a single investment pays its locked rate at maturity") {
  const PortfolioSynthEnv env;
  PortfolioState s = env.initial_state(true);
  auto never = [](const PortfolioState::Position&) { return false; };
  auto stay = [] { return false; };
  auto flip = [] { return true; };
  std::vector<double> rewards;
  rewards.push_back(env.advance(s, kInvest, never, flip).reward);
  for (int t = 1; t < 5; ++t) rewards.push_back(env.advance(s, kHold, never, stay).reward);
  // t=0: invest 0.2, interest on 0.8
  CHECK(rewards[0] == doctest::Approx(-0.2 + 0.8 * 0.001).epsilon(1e-15));
  // matures at the end of period 4 at the high rate locked when invested
  const double liquid_before = 0.8 * std::pow(1.001, 5);
  CHECK(rewards[4] == doctest::Approx(0.8 * std::pow(1.001, 4) * 0.001 + 0.2 * 2.0).epsilon(1e-13));
  CHECK(s.pending.empty());
  CHECK(s.liquid == doctest::Approx(liquid_before + 0.4).epsilon(1e-13));
  const VecX obs = env.observe(s);
  CHECK(obs[0] == 1.0);
  CHECK(obs[1] == 0.0);
}

TEST_CASE("observation reports pending sizes by time to maturity") {
  const PortfolioSynthEnv env;
  PortfolioState s = env.initial_state(false);
  auto never = [](const PortfolioState::Position&) { return false; };
  auto stay = [] { return false; };
  env.advance(s, kInvest, never, stay);
  env.advance(s, kHold, never, stay);
  const VecX obs = env.observe(s);
  REQUIRE(obs.size() == 6);
  CHECK(obs[1] == 0.0);
  CHECK(obs[2 + 2] > 0.0);  // invested at t=0, matures at 4, now t=2
  CHECK(obs[2] + obs[3] + obs[5] == 0.0);
  CHECK(obs[0] + obs[4] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rate chain spends half of the time in the high state") {
  const PortfolioSynthEnv env;
  RngStream rng(2024, 3);
  PortfolioState s = env.initial_state(false);
  auto never = [](const PortfolioState::Position&) { return false; };
  long high = 0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) {
    s.t = 0;
    env.advance(s, kHold, never, [&] { return rng.bernoulli(0.1); });
    high += s.high_rate ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(high) / n - 0.5) < 0.01);
}

TEST_CASE("portfolio config validation") {
  PortfolioSynthConfig c;
  c.p_risk = 1.5;
  CHECK_THROWS_AS(PortfolioSynthEnv{c}, ConfigError);
  c = {};
  c.r_nl_low = 3.0;
  CHECK_THROWS_AS(PortfolioSynthEnv{c}, ConfigError);
  c = {};
  c.fraction_w = 0.0;
  CHECK_THROWS_AS(PortfolioSynthEnv{c}, ConfigError);
}

// ---------------------------------------------------------------------------

TEST_CASE("option payoff examples") {
  OptionEnvConfig c;
  c.x0 = 1.25;
  const OptionEnv between(c);
  RngStream rng(1, 1);
  auto ep = between.reset(rng);
  StepResult r = ep->step(kExercise, rng);
  CHECK(r.reward == 0.0);
  CHECK(r.terminal);

  c.x0 = 0.8;
  const OptionEnv low(c);
  ep = low.reset(rng);
  r = ep->step(kExercise, rng);
  CHECK(r.reward == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.terminal);
  CHECK(low.payoff(2.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("option is exercised at maturity and pays at most once") {
  const OptionEnv env;
  const auto& c = env.config();
  const double x_max = c.x0 * std::pow(c.f_up, c.maturity);
  const double bound = std::max(c.strike_put, x_max - c.strike_call);
  MlpPolicy policy({2, 2, 2, 2}, 11);
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream rng(5, i);
    const Trajectory t = rollout(env, policy, rng);
    CHECK(t.stopping_time() <= c.maturity + 1);
    CHECK_FALSE(t.truncated);
    int nonzero = 0;
    for (const auto& s : t.steps) {
      CHECK(s.reward >= 0.0);
      CHECK(s.reward <= bound);
      nonzero += s.reward != 0.0;
    }
    CHECK(nonzero <= 1);
  }
  RngStream rng(6, 0);
  const std::vector<int> never(100, kContinue);
  auto ep = env.reset(rng);
  int steps = 0;
  while (true) {
    ++steps;
    if (ep->step(kContinue, rng).terminal) break;
  }
  CHECK(steps == c.maturity + 1);
}

TEST_CASE("option observation is price and elapsed fraction") {
  const OptionEnv env;
  RngStream rng(8, 8);
  auto ep = env.reset(rng);
  VecX s = ep->observe();
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 0.0);
  ep->step(kContinue, rng);
  s = ep->observe();
  CHECK((s[0] == doctest::Approx(9.0 / 8.0).epsilon(1e-15) || s[0] == doctest::Approx(8.0 / 9.0).epsilon(1e-15)));
  CHECK(s[1] == doctest::Approx(0.05).epsilon(1e-15));
}

// ---------------------------------------------------------------------------

TEST_CASE("CSV ingestion round-trips a small fixture") {
  const ReturnsMatrix m = parse("date,A,B\n200001,0.01,-0.02\n200002,0.03,0.5\n200003,-0.125,0\n");
  REQUIRE(m.months() == 3);
  REQUIRE(m.assets() == 2);
  CHECK(m.asset_names == std::vector<std::string>{"A", "B"});
  CHECK(m.dates == std::vector<int>{200001, 200002, 200003});
  CHECK(m.returns(0, 0) == 0.01);
  CHECK(m.returns(0, 1) == -0.02);
  CHECK(m.returns(1, 1) == 0.5);
  CHECK(m.returns(2, 0) == -0.125);
}

TEST_CASE("percent units are converted to fractions") {
  const ReturnsMatrix m = parse("# units: percent\ndate,A\n200001,1.5\n");
  CHECK(m.returns(0, 0) == doctest::Approx(0.015).epsilon(1e-15));
  CsvFormatSpec spec;
  spec.units = CsvFormatSpec::Units::Percent;
  CHECK(parse("date,A\n200001,1.5\n", spec).returns(0, 0) == doctest::Approx(0.015).epsilon(1e-15));
}

TEST_CASE("sentinels are rejected with row and column, or dropped on request") {
  const std::string text = "date,A,B\n200001,0.01,0.02\n200002,0.01,-99.99\n200003,0.02,0.03\n";
  const std::string msg = thrown_message(text);
  CHECK(msg.find("row 3") != std::string::npos);
  CHECK(msg.find("'B'") != std::string::npos);
  CsvFormatSpec drop;
  drop.sentinel_policy = CsvFormatSpec::SentinelPolicy::DropRow;
  CHECK(parse(text, drop).dates == std::vector<int>{200001, 200003});
  CsvFormatSpec window;
  window.window_to = 200001;
  CHECK(parse(text, window).months() == 1);
}

TEST_CASE("ingestion errors") {
  CHECK(thrown_message("date,A\n200002,0.1\n200001,0.2\n").find("does not increase") != std::string::npos);
  CHECK(thrown_message("date,A\n200001,abc\n").find("malformed value") != std::string::npos);
  CHECK(thrown_message("date,A\n200001,0.1,0.2\n").find("expected 2 fields") != std::string::npos);
  CHECK(thrown_message("date,A\n2000x1,0.1\n").find("malformed date") != std::string::npos);
  CHECK(thrown_message("when,A\n200001,0.1\n").find("date column") != std::string::npos);
  CHECK(thrown_message("").find("no header") != std::string::npos);
  CHECK_THROWS_AS(load_returns_csv("/nonexistent/returns.csv"), DataError);
}

// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<const ReturnsMatrix> make_data(Index months, Index assets, std::uint64_t seed) {
  auto m = std::make_shared<ReturnsMatrix>();
  RngStream rng(seed, 0);
  m->returns.resize(months, assets);
  for (Index t = 0; t < months; ++t) {
    m->dates.push_back(static_cast<int>(200000 + 100 * (t / 12) + t % 12 + 1));
    for (Index j = 0; j < assets; ++j) m->returns(t, j) = 0.2 * rng.uniform() - 0.1;
  }
  for (Index j = 0; j < assets; ++j) m->asset_names.push_back("a" + std::to_string(j));
  return m;
}

}  // namespace

TEST_CASE("single-asset dataset: reward equals the asset return") {
  auto data = make_data(30, 1, 3);
  DatasetPortfolioConfig c;
  c.lookback = 3;
  c.episode_len = 5;
  const DatasetPortfolioEnv env(data, c);
  MlpPolicy policy(dataset_layer_dims(1, 3), 2);
  for (std::uint64_t i = 0; i < 50; ++i) {
    RngStream rng(1, i);
    auto ep = env.reset(rng);
    const Index start = static_cast<DatasetEpisode&>(*ep).month();
    CHECK(start >= 3);
    CHECK(start <= 25);
    for (int k = 0; k < 5; ++k) {
      const StepResult r = ep->step(0, rng);
      CHECK(r.reward == data->returns(start + k, 0));
      CHECK(r.terminal == (k == 4));
    }
  }
}

TEST_CASE("dataset rewards: equal weights and dot products") {
  auto m = std::make_shared<ReturnsMatrix>(parse("date,A,B\n200001,0.01,0.03\n200002,0.02,0.04\n"));
  VecX eq = VecX::Constant(2, 0.5);
  CHECK(portfolio_return(*m, 0, eq) == doctest::Approx(0.02).epsilon(1e-15));

  auto data = make_data(40, 25, 5);
  const VecX w = VecX::Constant(25, 0.25 / 6.25);
  RngStream pick(9, 9);
  VecX rw(25);
  for (Index j = 0; j < 25; ++j) rw[j] = pick.uniform();
  rw /= rw.sum();
  for (Index t : {0, 17, 39}) {
    double hand = 0.0, hand_r = 0.0;
    for (Index j = 0; j < 25; ++j) {
      hand += data->returns(t, j) * w[j];
      hand_r += data->returns(t, j) * rw[j];
    }
    CHECK(portfolio_return(*data, t, w) == doctest::Approx(hand).epsilon(1e-14));
    const double y = portfolio_return(*data, t, rw);
    CHECK(y == doctest::Approx(hand_r).epsilon(1e-14));
    CHECK(y >= data->returns.row(t).minCoeff() - 1e-15);
    CHECK(y <= data->returns.row(t).maxCoeff() + 1e-15);
  }
  CHECK_THROWS_AS(portfolio_return(*data, 0, VecX::Ones(3)), IncompatibleError);
}

TEST_CASE("dataset state is the trailing window, month-major") {
  auto data = make_data(20, 3, 8);
  DatasetPortfolioConfig c;
  c.lookback = 4;
  c.episode_len = 2;
  const DatasetPortfolioEnv env(data, c);
  CHECK(env.state_dim() == 12);
  auto ep = env.start_at(10);
  const VecX s = ep->observe();
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 3; ++j) CHECK(s[3 * k + j] == data->returns(6 + k, j));
  }
  CHECK_THROWS_AS(env.start_at(19), ConfigError);
  CHECK_THROWS_AS(env.start_at(3), ConfigError);
  c.lookback = 15;
  c.episode_len = 6;
  CHECK_THROWS_AS(DatasetPortfolioEnv(data, c), ConfigError);
  CHECK(dataset_layer_dims(25, 12) == std::vector<int>{300, 100, 50, 25});
}
