#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tipsc/data.hpp"
#include "tipsc/errors.hpp"
#include "tipsc/graph.hpp"

namespace tipsc {

/// Fraction of misclassified points under the better of the two global sign flips.
inline double error_rate(std::span<const int> signs, std::span<const int> labels) {
  if (signs.size() != labels.size()) {
    throw ParameterError(fmt::format("error_rate: length mismatch ({} vs {})", signs.size(),
                                     labels.size()));
  }
  if (signs.empty()) throw ParameterError("error_rate: empty input");
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if ((signs[i] != 1 && signs[i] != -1) || (labels[i] != 1 && labels[i] != -1)) {
      throw ParameterError("error_rate: entries must be +1 or -1");
    }
    mismatches += signs[i] != labels[i];
  }
  const std::size_t best = std::min(mismatches, signs.size() - mismatches);
  return static_cast<double>(best) / static_cast<double>(signs.size());
}

/// Maxima of the three concentration statistics defining the event set E(t).
struct EventMargins {
  double norm_deviation = 0.0;     // max_i | ||a_i|| - 1 |
  double overlap_deviation = 0.0;  // max_i | sum_k lambda_k^2 a_ik^2 - aff^2 |
  double max_inner_product = 0.0;  // max_{i != j} |<x_i, x_j>|
  double t = 0.0;
  bool norm_ok = false;
  bool overlap_ok = false;
  bool inner_ok = false;

  bool all_ok() const noexcept { return norm_ok && overlap_ok && inner_ok; }
};

/// Evaluates E(t) given a precomputed Gram matrix of the dataset.
inline EventMargins event_check(const Dataset& data, const Eigen::MatrixXd& gram, double t) {
  if (!(t > 0.0)) throw ParameterError("event_check: t must be positive");
  if (!data.coefficients) {
    throw UnsupportedOperationError(
        "event_check: dataset carries no Gaussian coefficients (provenance not retained)");
  }
  const auto& coeffs = *data.coefficients;
  const int N = data.size();
  const int d = data.spec.d();
  const double aff2 = data.spec.aff_squared();
  EventMargins m;
  m.t = t;
  for (int i = 0; i < N; ++i) {
    std::span<const double> a(coeffs.row(i).data(), d);
    double norm2 = 0.0;
    for (double v : a) norm2 += v * v;
    m.norm_deviation = std::max(m.norm_deviation, std::abs(std::sqrt(norm2) - 1.0));
    const double energy = data.spec.overlap_energy(data.labels[i] == 1, a);
    m.overlap_deviation = std::max(m.overlap_deviation, std::abs(energy - aff2));
  }
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      m.max_inner_product = std::max(m.max_inner_product, std::abs(gram(i, j)));
  m.norm_ok = m.norm_deviation < t;
  m.overlap_ok = m.overlap_deviation < t;
  m.inner_ok = m.max_inner_product < t;
  return m;
}

inline EventMargins event_check(const Dataset& data, double t) {
  if (!data.coefficients) {
    throw UnsupportedOperationError(
        "event_check: dataset carries no Gaussian coefficients (provenance not retained)");
  }
  return event_check(data, gram_matrix(data), t);
}

/// Per-row deviations of within- and cross-cluster degrees from their expectations.
struct RowDeviation {
  double within = 0.0;  // sum_{j same} A_ij - p_ref (N/2 - 1)
  double cross = 0.0;   // sum_{j other} A_ij - q_ref N/2
};

inline std::vector<RowDeviation> centered_row_sums(const AdjacencyMatrix& A,
                                                   std::span<const int> labels, double p_ref,
                                                   double q_ref) {
  const int N = A.size();
  check_balanced(labels, N);
  const double half = N / 2;
  std::vector<RowDeviation> out(N);
  for (int i = 0; i < N; ++i) {
    int same = 0;
    int other = 0;
    for (int j = 0; j < N; ++j) {
      if (!A(i, j)) continue;
      (labels[i] == labels[j] ? same : other) += 1;
    }
    out[i].within = same - p_ref * (half - 1.0);
    out[i].cross = other - q_ref * half;
  }
  return out;
}

/// Per-row empirical cross-cluster rates q_hat_i = (cross edges of i) / (N/2).
inline std::vector<double> row_cross_rates(const AdjacencyMatrix& A, std::span<const int> labels) {
  const int N = A.size();
  check_balanced(labels, N);
  std::vector<double> rates(N);
  for (int i = 0; i < N; ++i) {
    int other = 0;
    for (int j = 0; j < N; ++j) other += A(i, j) && labels[i] != labels[j];
    rates[i] = other / (N / 2.0);
  }
  return rates;
}

/// Outcome of one end-to-end clustering trial.
struct TrialResult {
  // config echo
  int d = 0;
  int n = 0;
  int s = 0;
  int N = 0;
  double sigma = 0.0;
  double tau = 0.0;
  std::uint64_t master_seed = 0;
  int trial_index = 0;
  std::uint64_t seed = 0;

  double gamma = 0.5;
  double p_hat = 0.0;
  double q_hat = 0.0;
  double lambda1_hat = std::numeric_limits<double>::quiet_NaN();
  double lambda2_hat = std::numeric_limits<double>::quiet_NaN();
  double lambda3_hat = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double max_residual = std::numeric_limits<double>::quiet_NaN();
  EventMargins events;

  // theory evaluations at this trial
  double p_lower = std::numeric_limits<double>::quiet_NaN();
  double p_upper = std::numeric_limits<double>::quiet_NaN();
  double q_lower = std::numeric_limits<double>::quiet_NaN();
  double q_upper = std::numeric_limits<double>::quiet_NaN();
  double lambda3_bound = std::numeric_limits<double>::quiet_NaN();
  double theorem_bound = std::numeric_limits<double>::quiet_NaN();
  double lemma_pq_stat = std::numeric_limits<double>::quiet_NaN();
  /// 95th percentile of |centered row sums| over both deviation kinds.
  double row_sum_p95 = std::numeric_limits<double>::quiet_NaN();

  bool degenerate = false;  // degenerate projection; gamma forced to 1/2
  bool gap_warning = false;

  bool p_in_bracket() const noexcept { return p_hat >= p_lower && p_hat <= p_upper; }
  bool q_in_bracket() const noexcept { return q_hat >= q_lower && q_hat <= q_upper; }
};

struct FieldStats {
  double mean = 0.0;
  double stddev = 0.0;  // unbiased (divisor T - 1)
};

/// Mean and unbiased standard deviation; NaN entries are skipped.
inline FieldStats summarize(std::span<const double> values) {
  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values)
    if (!std::isnan(v)) finite.push_back(v);
  if (finite.size() < 2) {
    if (finite.size() == 1) return {finite[0], std::numeric_limits<double>::quiet_NaN()};
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  double mean = 0.0;
  for (double v : finite) mean += v;
  mean /= static_cast<double>(finite.size());
  double ss = 0.0;
  for (double v : finite) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(finite.size() - 1))};
}

struct TrialSummary {
  int trials = 0;
  FieldStats gamma;
  FieldStats p_hat;
  FieldStats q_hat;
  FieldStats gap;
  FieldStats lambda1_hat;
  FieldStats lambda2_hat;
  FieldStats lambda3_hat;
  FieldStats lambda3_bound;
  double gap_positive_fraction = 0.0;
  int degenerate_trials = 0;
};

/// Field-wise mean and unbiased std over at least two trials of one configuration.
inline TrialSummary aggregate(std::span<const TrialResult> results) {
  if (results.size() < 2) {
    throw ParameterError(
        fmt::format("aggregate: need at least 2 trials for an unbiased std (got {})",
                    results.size()));
  }
  const auto& first = results.front();
  for (const auto& r : results) {
    if (r.d != first.d || r.n != first.n || r.s != first.s || r.N != first.N ||
        r.sigma != first.sigma || r.tau != first.tau) {
      throw ParameterError("aggregate: results come from different configurations");
    }
  }
  auto field = [&](auto member) {
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back(r.*member);
    return summarize(v);
  };
  TrialSummary s;
  s.trials = static_cast<int>(results.size());
  s.gamma = field(&TrialResult::gamma);
  s.p_hat = field(&TrialResult::p_hat);
  s.q_hat = field(&TrialResult::q_hat);
  s.gap = field(&TrialResult::gap);
  s.lambda1_hat = field(&TrialResult::lambda1_hat);
  s.lambda2_hat = field(&TrialResult::lambda2_hat);
  s.lambda3_hat = field(&TrialResult::lambda3_hat);
  s.lambda3_bound = field(&TrialResult::lambda3_bound);
  int positive = 0;
  for (const auto& r : results) {
    positive += r.gap > 0.0;
    s.degenerate_trials += r.degenerate;
  }
  s.gap_positive_fraction = static_cast<double>(positive) / static_cast<double>(results.size());
  return s;
}

}  // namespace tipsc
