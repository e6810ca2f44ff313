#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace equm {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

/// Probability-weighted score-function estimators on enumerable two-step MDPs
/// against the exact enumeration gradients (per coordinate, 1e-10).
CheckResult check_estimator_identities(std::uint64_t seed);

/// Exact enumeration gradients against fourth-order finite differences of the
/// enumerated expectations.
CheckResult check_exact_gradients_fd(std::uint64_t seed);

/// log_prob_grad of random MlpPolicy instances against central differences
/// (step 1e-4), relative error below 1e-5 for every probe. Probes whose
/// rectifier pattern changes inside the difference stencil are redrawn.
CheckResult check_log_prob_gradients(std::uint64_t seed, int probes = 100);

/// Mean-variance decomposition of E[u(R)], the psi-regularized and MSE forms,
/// and the dual-ascent/EQUM estimator identity on random samples (1e-10).
CheckResult check_algebraic_identities(std::uint64_t seed);

/// argmax E[u] == argmin E[(zeta - R)^2] on a 21 x 21 grid of tabular
/// policies for three (alpha, beta) settings.
CheckResult check_mse_equivalence();

/// Plug-in gradient of (E[R])^2 is unbiased on a constant-return chain and
/// biased on a two-arm bandit; the EQUM estimator gap is zero on both.
CheckResult check_double_sampling();

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed);

/// "PASS name: max_error=... tol=... (detail)"
std::string format_check(const CheckResult& r);

}  // namespace equm
