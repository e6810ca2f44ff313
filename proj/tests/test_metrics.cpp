#include "equm/environments.hpp"
#include "equm/metrics.hpp"
#include "equm/policy.hpp"
#include "equm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

using namespace equm;

namespace {

bool dominates(const FrontierPoint& a, const FrontierPoint& b) {
  return a.var <= b.var && a.cr >= b.cr && (a.var < b.var || a.cr > b.cr);
}

std::vector<bool> brute_force(const std::vector<FrontierPoint>& pts) {
  std::vector<bool> out(pts.size(), false);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size() && !out[i]; ++j) out[i] = j != i && dominates(pts[j], pts[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("constant returns have zero variance and an infinite ratio") {
  const std::vector<double> r{1, 1, 1, 1};
  const EvalReport rep = summarize(r);
  CHECK(rep.cr == 1.0);
  CHECK(rep.var == 0.0);
  CHECK(rep.zero_variance);
  CHECK(rep.rr == std::numeric_limits<double>::infinity());
  CHECK(rep.n_trials == 4);
}

TEST_CASE("two-point sample: population variance and annualized ratio") {
  const std::vector<double> r{0, 2};
  SummaryOptions opt;
  opt.annualization = std::sqrt(12.0);
  const EvalReport rep = summarize(r, opt);
  CHECK(rep.cr == 1.0);
  CHECK(rep.var == 1.0);
  CHECK(rep.rr == doctest::Approx(std::sqrt(12.0)).epsilon(1e-15));
  CHECK_FALSE(rep.zero_variance);
  opt.sample_variance = true;
  CHECK(summarize(r, opt).var == 2.0);
}

TEST_CASE("ratio sign follows the mean") {
  const std::vector<double> r{-1.0, -0.5, 0.25};
  const EvalReport rep = summarize(r);
  CHECK(rep.cr < 0.0);
  CHECK(rep.rr < 0.0);
}

TEST_CASE("max drawdown examples") {
  const std::vector<double> up{0.01, 0.02, 0.5};
  CHECK(max_drawdown(up) == 0.0);
  const std::vector<double> halve{1.0, -0.5};
  CHECK(std::abs(max_drawdown(halve) - -0.5) <= 1e-12);
  const std::vector<double> mixed{0.1, -0.2, 0.05, -0.1};
  CHECK(std::abs(max_drawdown(mixed) - -0.244) <= 1e-12);
  const std::vector<double> ruin{0.1, -1.0};
  CHECK_THROWS_AS(max_drawdown(ruin), std::domain_error);
  CHECK(max_drawdown(std::vector<double>{}) == 0.0);
}

TEST_CASE("max drawdown against a direct running-peak computation") {
  RngStream rng(3, 3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> r(1 + rep % 40);
    for (double& x : r) x = 0.6 * rng.uniform() - 0.3;
    // peak over periods 1..t; the starting wealth is not a period
    double w = 1.0, peak = 0.0, worst = 0.0;
    for (double x : r) {
      w *= 1.0 + x;
      peak = std::max(peak, w);
      worst = std::min(worst, w / peak - 1.0);
    }
    const double dd = max_drawdown(r);
    CHECK(dd == doctest::Approx(worst).epsilon(1e-12));
    CHECK(dd <= 0.0);
    CHECK(dd >= -1.0);
    // appending a period that stays at or above the running peak ratio changes nothing
    std::vector<double> more = r;
    more.push_back(std::max(0.0, peak / w - 1.0) + 0.01);
    CHECK(max_drawdown(more) == doctest::Approx(dd).epsilon(1e-12));
  }
}

TEST_CASE("mse_to_target examples") {
  const std::vector<double> at{3.0, 3.0, 3.0};
  CHECK(mse_to_target(at, 3.0) == 0.0);
  const std::vector<double> two{0.0, 2.0};
  CHECK(mse_to_target(two, 1.0) == 1.0);
  SummaryOptions opt;
  opt.zeta = 1.0;
  const EvalReport rep = summarize(two, opt);
  REQUIRE(rep.mse_to_target.has_value());
  CHECK(*rep.mse_to_target == 1.0);
  // bias-variance split: mean (zeta - R)^2 = (zeta - cr)^2 + var
  RngStream rng(4, 4);
  std::vector<double> r(500);
  for (double& x : r) x = 5.0 * rng.uniform();
  const EvalReport s = summarize(r);
  CHECK(mse_to_target(r, 7.0) == doctest::Approx((7.0 - s.cr) * (7.0 - s.cr) + s.var).epsilon(1e-12));
}

TEST_CASE("pareto filter small cases") {
  std::vector<FrontierPoint> one{{"a", 3.0, 1.0, false}};
  pareto_filter(one);
  CHECK_FALSE(one[0].dominated);
  std::vector<FrontierPoint> two{{"a", 1.0, 1.0, false}, {"b", 2.0, 1.0, false}};
  pareto_filter(two);
  CHECK_FALSE(two[0].dominated);
  CHECK(two[1].dominated);
  std::vector<FrontierPoint> tie{{"a", 1.0, 1.0, false}, {"b", 1.0, 1.0, false}};
  pareto_filter(tie);
  CHECK_FALSE(tie[0].dominated);
  CHECK_FALSE(tie[1].dominated);
}

TEST_CASE("pareto filter agrees with the pairwise oracle") {
  RngStream rng(5, 5);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform() * 200);
    const bool coarse = rep % 2 == 0;  // many ties
    std::vector<FrontierPoint> pts(n);
    for (auto& p : pts) {
      p.var = coarse ? std::floor(5.0 * rng.uniform()) : rng.uniform();
      p.cr = coarse ? std::floor(5.0 * rng.uniform()) : rng.uniform();
    }
    pareto_filter(pts);
    const auto oracle = brute_force(pts);
    for (int i = 0; i < n; ++i) CHECK(pts[i].dominated == oracle[i]);
    // order-preserving transform of one axis keeps the dominated set
    auto moved = pts;
    for (auto& p : moved) p.var = std::exp(3.0 * p.var);
    pareto_filter(moved);
    for (int i = 0; i < n; ++i) CHECK(moved[i].dominated == pts[i].dominated);
  }
}

TEST_CASE("evaluation is deterministic and consistent across sample sizes") {
  const PortfolioSynthEnv env;
  MlpPolicy policy(synthetic_layer_dims(env.state_dim(), 2), 7);
  const EvalReport a = evaluate(policy, env, 2000, 11);
  const EvalReport b = evaluate(policy, env, 2000, 11);
  CHECK(a.cr == b.cr);
  CHECK(a.var == b.var);
  const EvalReport c = evaluate(policy, env, 4000, 12);
  CHECK(std::abs(c.cr - a.cr) < 5.0 * std::sqrt(a.var / 2000.0));
  CHECK_THROWS(evaluate(policy, env, 1, 1));
}

TEST_CASE("EvalReport CSV rows round-trip losslessly") {
  EvalReport r;
  r.label = "equm zeta=6, \"quoted\"";
  r.n_trials = 10000;
  r.cr = 0.1 + 0.2;
  r.var = 1.0 / 3.0;
  r.rr = std::numeric_limits<double>::infinity();
  r.zero_variance = true;
  r.maxdd = -0.244;
  r.mse_to_target = 51.669000000000004;
  r.zeta = 6.0;
  const std::string row = format_eval_row(r);
  const EvalReport back = parse_eval_row(row);
  CHECK(back.label == r.label);
  CHECK(back.n_trials == r.n_trials);
  CHECK(back.cr == r.cr);
  CHECK(back.var == r.var);
  CHECK(back.rr == r.rr);
  CHECK(back.maxdd == r.maxdd);
  CHECK(back.mse_to_target == r.mse_to_target);
  CHECK(back.zeta == r.zeta);
  CHECK(format_eval_row(back) == row);

  EvalReport plain;
  plain.label = "reinforce seed=1";
  plain.cr = -1e-300;
  const EvalReport p2 = parse_eval_row(format_eval_row(plain));
  CHECK_FALSE(p2.mse_to_target.has_value());
  CHECK_FALSE(p2.zeta.has_value());
  CHECK(p2.cr == plain.cr);

  std::istringstream in(std::string(kEvalReportHeader) + "\n" + row + "\n" + format_eval_row(plain) + "\n");
  const auto rows = read_eval_csv(in);
  REQUIRE(rows.size() == 2);
  CHECK(format_eval_row(rows[0]) == row);
}

TEST_CASE("malformed EvalReport CSV is rejected") {
  std::istringstream missing("label,cr\nx,1\n");
  CHECK_THROWS_AS(read_eval_csv(missing), DataError);
  std::istringstream bad(std::string(kEvalReportHeader) + "\nx,10,abc,1,1,0,,\n");
  CHECK_THROWS_AS(read_eval_csv(bad), DataError);
}

TEST_CASE("format_real round-trips") {
  RngStream rng(6, 6);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.uniform() * 200) - 100);
    CHECK(parse_real(format_real(x)) == x);
  }
  CHECK(std::isinf(parse_real(format_real(-std::numeric_limits<double>::infinity()))));
  CHECK(std::isnan(parse_real(format_real(std::numeric_limits<double>::quiet_NaN()))));
}
