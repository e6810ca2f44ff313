#pragma once

#include "equm/core.hpp"
#include "equm/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace equm {

struct EvalReport {
  std::string label;
  long n_trials = 0;
  double cr = 0.0;
  double var = 0.0;
  double rr = 0.0;
  double maxdd = 0.0;  // signed, in [-1, 0]
  std::optional<double> mse_to_target;
  std::optional<double> zeta;
  bool zero_variance = false;  // rr holds the +inf sentinel
  std::vector<double> returns;  // per-trial, only when requested
};

struct SummaryOptions {
  // sqrt(12) for monthly series, 1 for episodic synthetic environments
  double annualization = 1.0;
  bool sample_variance = false;
  std::optional<double> zeta;
  bool keep_returns = false;
};

/// CR, Var, R/R, MaxDD (and MSE to zeta) of an ordered return series.
/// MaxDD treats the series as consecutive periods; a series with a return
/// <= -1 is a total loss and reports -1.
EvalReport summarize(std::span<const double> returns, const SummaryOptions& opt = {});

/// n_trials rollouts, trial i on RngStream(seed, kEvalStreams + i).
/// Deterministic for a given seed regardless of thread count.
EvalReport evaluate(const Policy& policy, const Environment& env, long n_trials, std::uint64_t seed,
                    const SummaryOptions& opt = {}, std::uint64_t stream_base = kEvalStreams);

/// Per-trial cumulative rewards; the building block of evaluate.
std::vector<double> sample_returns(const Policy& policy, const Environment& env, long n_trials, std::uint64_t seed,
                                   std::uint64_t stream_base = kEvalStreams, double discount = 1.0);

/// min_t (0, W_t / max_{s<=t} W_s - 1) with W_t = prod (1 + y). Throws
/// std::domain_error for a return <= -1.
double max_drawdown(std::span<const double> returns);

/// mean (zeta - R)^2
double mse_to_target(std::span<const double> returns, double zeta);

struct FrontierPoint {
  std::string label;
  double var = 0.0;
  double cr = 0.0;
  bool dominated = false;
};

/// Flags points dominated in (lower var, higher cr). O(n log n).
void pareto_filter(std::vector<FrontierPoint>& points);

// EvalReport CSV rows: label,n_trials,cr,var,rr,maxdd,mse_zeta,zeta
// maxdd is written as a magnitude; empty fields encode absent optionals.
inline constexpr const char* kEvalReportHeader = "label,n_trials,cr,var,rr,maxdd,mse_zeta,zeta";
std::string format_eval_row(const EvalReport& r);
EvalReport parse_eval_row(const std::string& line);
std::vector<EvalReport> read_eval_csv(std::istream& is);

/// Shortest decimal that round-trips ("%.17g"; inf/nan spelled out).
std::string format_real(double x);
double parse_real(const std::string& s);

/// CSV field splitting with double-quote escaping.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);

}  // namespace equm
