#include "equm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <istream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace equm {

std::vector<double> sample_returns(const Policy& policy, const Environment& env, long n_trials, std::uint64_t seed,
                                   std::uint64_t stream_base, double discount) {
  std::vector<double> out(static_cast<std::size_t>(std::max(0L, n_trials)));
  auto work = [&](long begin, long end) {
    for (long i = begin; i < end; ++i) {
      RngStream rng(seed, stream_base + static_cast<std::uint64_t>(i));
      out[static_cast<std::size_t>(i)] = cumulative_reward(rollout(env, policy, rng, discount));
    }
  };
  const long n_threads = std::clamp<long>(static_cast<long>(std::thread::hardware_concurrency()), 1L,
                                          std::max(1L, n_trials / 256));
  if (n_threads <= 1) {
    work(0, n_trials);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  const long chunk = (n_trials + n_threads - 1) / n_threads;
  for (long t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t * chunk, std::min(n_trials, (t + 1) * chunk));
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

EvalReport summarize(std::span<const double> returns, const SummaryOptions& opt) {
  if (returns.size() < 2) throw std::invalid_argument("summary needs at least two returns");
  EvalReport r;
  r.n_trials = static_cast<long>(returns.size());
  const double n = static_cast<double>(returns.size());
  r.cr = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : returns) ss += (x - r.cr) * (x - r.cr);
  r.var = ss / (opt.sample_variance ? n - 1.0 : n);
  if (r.var > 0.0) {
    r.rr = opt.annualization * r.cr / std::sqrt(r.var);
  } else {
    r.rr = std::numeric_limits<double>::infinity();
    r.zero_variance = true;
  }
  const bool total_loss = std::any_of(returns.begin(), returns.end(), [](double x) { return x <= -1.0; });
  r.maxdd = total_loss ? -1.0 : max_drawdown(returns);
  if (opt.zeta) {
    r.zeta = opt.zeta;
    r.mse_to_target = mse_to_target(returns, *opt.zeta);
  }
  if (opt.keep_returns) r.returns.assign(returns.begin(), returns.end());
  return r;
}

EvalReport evaluate(const Policy& policy, const Environment& env, long n_trials, std::uint64_t seed,
                    const SummaryOptions& opt, std::uint64_t stream_base) {
  if (n_trials < 2) throw std::invalid_argument("evaluate needs n_trials >= 2");
  const auto returns = sample_returns(policy, env, n_trials, seed, stream_base);
  return summarize(returns, opt);
}

double max_drawdown(std::span<const double> returns) {
  double wealth = 1.0;
  double peak = 0.0;
  double worst = 0.0;
  for (double y : returns) {
    if (!(y > -1.0)) throw std::domain_error("max_drawdown: period return <= -1");
    wealth *= 1.0 + y;
    peak = std::max(peak, wealth);
    worst = std::min(worst, wealth / peak - 1.0);
  }
  return worst;
}

double mse_to_target(std::span<const double> returns, double zeta) {
  if (returns.empty()) throw std::invalid_argument("mse_to_target needs a nonempty sample");
  double acc = 0.0;
  for (double x : returns) acc += (zeta - x) * (zeta - x);
  return acc / static_cast<double>(returns.size());
}

void pareto_filter(std::vector<FrontierPoint>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].var != points[b].var) return points[a].var < points[b].var;
    return points[a].cr > points[b].cr;
  });
  // Sweep groups of equal var. A point is dominated by a strictly smaller var
  // with cr' >= cr, or by an equal var with cr' > cr.
  double best_before = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double var = points[order[i]].var;
    const double group_best = points[order[i]].cr;
    while (j < order.size() && points[order[j]].var == var) ++j;
    for (std::size_t k = i; k < j; ++k) {
      auto& p = points[order[k]];
      p.dominated = best_before >= p.cr || group_best > p.cr;
    }
    best_before = std::max(best_before, group_best);
    i = j;
  }
}

// ---------------------------------------------------------------------------

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_real(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DataError("malformed number '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted field in '" + line + "'");
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string format_eval_row(const EvalReport& r) {
  std::string s = csv_escape(r.label);
  s += ',' + std::to_string(r.n_trials);
  s += ',' + format_real(r.cr);
  s += ',' + format_real(r.var);
  s += ',' + format_real(r.rr);
  s += ',' + format_real(r.maxdd == 0.0 ? 0.0 : -r.maxdd);
  s += ',' + (r.mse_to_target ? format_real(*r.mse_to_target) : std::string());
  s += ',' + (r.zeta ? format_real(*r.zeta) : std::string());
  return s;
}

EvalReport parse_eval_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 8) throw DataError("eval row needs 8 fields, found " + std::to_string(f.size()) + ": '" + line + "'");
  EvalReport r;
  r.label = f[0];
  try {
    r.n_trials = std::stol(f[1]);
  } catch (const std::exception&) {
    throw DataError("malformed n_trials '" + f[1] + "'");
  }
  r.cr = parse_real(f[2]);
  r.var = parse_real(f[3]);
  r.rr = parse_real(f[4]);
  r.zero_variance = r.var == 0.0;
  const double dd = parse_real(f[5]);
  r.maxdd = dd == 0.0 ? 0.0 : -dd;
  if (!f[6].empty()) r.mse_to_target = parse_real(f[6]);
  if (!f[7].empty()) r.zeta = parse_real(f[7]);
  return r;
}

std::vector<EvalReport> read_eval_csv(std::istream& is) {
  std::vector<EvalReport> rows;
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty eval CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kEvalReportHeader) throw DataError("eval CSV header must be '" + std::string(kEvalReportHeader) + "'");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_eval_row(line));
  }
  return rows;
}

}  // namespace equm
