#pragma once

// Closed-form bounds for thresholded inner-product clustering.
//
// The absolute constants (c1, c2, the lambda3 prefactor and the error-rate
// prefactor) are only known to exist. They are explicit parameters here;
// defaults are calibrated choices, not derived ones.

#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <fmt/format.h>

#include "tipsc/errors.hpp"

namespace tipsc::theory {

struct Constants {
  double c1 = 1.0;           // event radius t = c1 sqrt(log N / d)
  double c2 = 1.0;           // slack e^{-c2 log N} in the p/q brackets
  double c_eig = 4.0;        // lambda3 bound prefactor
  double c_kappa = 1.0;      // applicability threshold prefactor
  /// Prefactor of the error-rate bound. Fitted so the bound covers mean gamma at every
  /// applicable point of the shipped desk-scale grids (largest ratio 0.125 at rho = 0.5);
  /// tests/test_theory.cpp re-checks it on fresh seeds.
  double C = 0.2;
};

/// Two-sided standard normal tail P(|Z| > t) = erfc(t / sqrt 2).
inline double gaussian_tail(double t) {
  if (!(t >= 0.0)) throw ParameterError(fmt::format("gaussian_tail: t must be >= 0 (t={})", t));
  return std::erfc(t / std::numbers::sqrt2);
}

/// Radius of the canonical event set, c1 sqrt(log N / d).
inline double event_radius(int d, int N, double c1) {
  return c1 * std::sqrt(std::log(static_cast<double>(N)) / d);
}

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
  /// e^{-c2 log N}, the additive slack kept outside the bracket.
  double slack = 0.0;
  double t = 0.0;

  bool contains(double x) const noexcept { return x >= lower && x <= upper; }
};

/// [Phi(tau_d (1 + t)), Phi(tau_d (1 - t))] with tau_d = sqrt(d) tau.
inline Bracket lemma_p_bracket(double tau, int d, int N, double c1, double c2 = 1.0) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("lemma_p_bracket: tau must lie in (0, 1)");
  if (d < 2 || N < 2) throw ParameterError("lemma_p_bracket: d and N must be >= 2");
  const double t = event_radius(d, N, c1);
  if (t >= 1.0) {
    throw InapplicableBoundError(
        fmt::format("lemma_p_bracket: event radius t = {:.4g} >= 1 degenerates the bracket", t));
  }
  const double tau_d = std::sqrt(static_cast<double>(d)) * tau;
  return {gaussian_tail(tau_d * (1.0 + t)), gaussian_tail(tau_d * (1.0 - t)),
          std::exp(-c2 * std::log(static_cast<double>(N))), t};
}

/// [Phi(tau_d (1 + t) / (aff^2 - t)), Phi(tau_d (1 - t) / (aff^2 + t))].
inline Bracket lemma_q_bracket(double tau, int d, int N, double aff, double c1, double c2 = 1.0) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("lemma_q_bracket: tau must lie in (0, 1)");
  if (d < 2 || N < 2) throw ParameterError("lemma_q_bracket: d and N must be >= 2");
  const double t = event_radius(d, N, c1);
  const double aff2 = aff * aff;
  if (!(aff2 - t > 0.0)) {
    throw InapplicableBoundError(fmt::format(
        "lemma_q_bracket: requires aff^2 > t (aff^2 = {:.4g}, t = {:.4g})", aff2, t));
  }
  if (t >= 1.0) throw InapplicableBoundError("lemma_q_bracket: event radius t >= 1");
  const double tau_d = std::sqrt(static_cast<double>(d)) * tau;
  return {gaussian_tail(tau_d * (1.0 + t) / (aff2 - t)),
          gaussian_tail(tau_d * (1.0 - t) / (aff2 + t)),
          std::exp(-c2 * std::log(static_cast<double>(N))), t};
}

/// c sqrt(N p log N + N^2 p^2 t).
inline double lambda3_bound(double N, double p, double t, double c) {
  if (!(N > 0 && p > 0 && t >= 0 && c > 0)) {
    throw ParameterError("lambda3_bound: arguments must be positive");
  }
  return c * std::sqrt(N * p * std::log(N) + N * N * p * p * t);
}

/// C (1 + sigma^2 d / n)^2 (1 + 1/rho) log N / (kappa^2 d). sigma = 0 is the noiseless bound.
inline double theorem_error_bound(double kappa, int d, int N, double rho, double sigma, int n,
                                  double C) {
  if (!(kappa > 0.0)) {
    throw InapplicableBoundError(
        fmt::format("theorem_error_bound: requires kappa > 0 (kappa = {})", kappa));
  }
  if (d <= 0 || N < 2 || !(rho > 0.0) || n <= 0) {
    throw ParameterError("theorem_error_bound: d, N, rho, n must be positive");
  }
  const double noise = 1.0 + sigma * sigma * d / n;
  return C * noise * noise * (1.0 + 1.0 / rho) * std::log(static_cast<double>(N)) /
         (kappa * kappa * d);
}

/// kappa > c (log N / d)^{1/4}.
inline double applicability_threshold(int d, int N, double c) {
  return c * std::pow(std::log(static_cast<double>(N)) / d, 0.25);
}

inline bool applicability(double kappa, int d, int N, double c) {
  return kappa > applicability_threshold(d, N, c);
}

/// (1/N) sum_i (q_i - q_bar)^2 over per-row cross-cluster rate estimates.
inline double lemma_pq_stats(std::span<const double> q_i, double q_bar) {
  if (q_i.empty()) throw ParameterError("lemma_pq_stats: empty list");
  double total = 0.0;
  for (double q : q_i) total += (q - q_bar) * (q - q_bar);
  return total / static_cast<double>(q_i.size());
}

/// Estimator-aware reference scale for lemma_pq_stats:
/// log N / d plus the binomial variance of a per-row rate over N/2 draws.
inline double lemma_pq_scale(double q_bar, int d, int N) {
  return std::log(static_cast<double>(N)) / d + q_bar * (1.0 - q_bar) / (N / 2.0);
}

/// Bound values at one configuration, for overlaying theory on measurements.
struct TheoryReport {
  int d = 0;
  int n = 0;
  int s = 0;
  int N = 0;
  double rho = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  double aff = 0.0;
  double kappa = 0.0;  // scale of p - q
  double t = 0.0;
  double p_reference = 0.0;  // p used in the lambda3 bound
  double phi_tau = 0.0;      // lower end of the p bracket
  double p_upper = 0.0;
  bool q_applicable = false;
  double q_lower = 0.0;
  double q_upper = 0.0;
  double slack = 0.0;
  double lambda1_target = 0.0;  // p (N/2 - 1) + q N/2
  double lambda2_target = 0.0;  // p (N/2 - 1) - q N/2
  double lambda3_bound = 0.0;
  bool theorem_applicable = false;
  double applicability_threshold = 0.0;
  double theorem_bound = 0.0;
  Constants constants;
};

struct ReportInputs {
  int d = 0;
  int n = 0;
  int s = 0;
  int N = 0;
  double aff = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  double p_reference = 0.0;
  double q_reference = 0.0;
};

inline TheoryReport make_report(const ReportInputs& in, const Constants& constants = {}) {
  TheoryReport r;
  r.d = in.d;
  r.n = in.n;
  r.s = in.s;
  r.N = in.N;
  r.rho = in.N / (2.0 * in.d);
  r.sigma = in.sigma;
  r.tau = in.tau;
  r.aff = in.aff;
  r.kappa = 1.0 - in.aff * in.aff;
  r.constants = constants;
  const Bracket p = lemma_p_bracket(in.tau, in.d, in.N, constants.c1, constants.c2);
  r.t = p.t;
  r.slack = p.slack;
  r.phi_tau = p.lower;
  r.p_upper = p.upper;
  try {
    const Bracket q = lemma_q_bracket(in.tau, in.d, in.N, in.aff, constants.c1, constants.c2);
    r.q_applicable = true;
    r.q_lower = q.lower;
    r.q_upper = q.upper;
  } catch (const InapplicableBoundError&) {
    r.q_applicable = false;
  }
  r.p_reference = in.p_reference;
  const double half = in.N / 2.0;
  r.lambda1_target = in.p_reference * (half - 1.0) + in.q_reference * half;
  r.lambda2_target = in.p_reference * (half - 1.0) - in.q_reference * half;
  r.lambda3_bound = lambda3_bound(in.N, in.p_reference, r.t, constants.c_eig);
  r.applicability_threshold = applicability_threshold(in.d, in.N, constants.c_kappa);
  r.theorem_applicable = applicability(r.kappa, in.d, in.N, constants.c_kappa);
  r.theorem_bound = r.kappa > 0.0 ? theorem_error_bound(r.kappa, in.d, in.N, r.rho, in.sigma,
                                                        in.n, constants.C)
                                  : std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace tipsc::theory
