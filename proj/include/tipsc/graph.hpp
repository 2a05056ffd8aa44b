#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tipsc/data.hpp"
#include "tipsc/errors.hpp"
#include "tipsc/rng.hpp"

namespace tipsc {

/// Dense symmetric 0/1 matrix with zero diagonal. Immutable once built.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;

  /// Wraps explicit entries (row-major N*N); validates symmetry, zero diagonal and 0/1 values.
  static AdjacencyMatrix from_entries(int N, std::vector<std::uint8_t> entries,
                                      double tau = std::numeric_limits<double>::quiet_NaN()) {
    if (N < 0 || entries.size() != static_cast<std::size_t>(N) * N) {
      throw ParameterError("AdjacencyMatrix: entry count does not match N*N");
    }
    for (int i = 0; i < N; ++i) {
      if (entries[static_cast<std::size_t>(i) * N + i] != 0) {
        throw ParameterError(fmt::format("AdjacencyMatrix: nonzero diagonal at {}", i));
      }
      for (int j = 0; j < N; ++j) {
        const auto a = entries[static_cast<std::size_t>(i) * N + j];
        if (a > 1) throw ParameterError("AdjacencyMatrix: entries must be 0 or 1");
        if (a != entries[static_cast<std::size_t>(j) * N + i]) {
          throw ParameterError(fmt::format("AdjacencyMatrix: asymmetric at ({}, {})", i, j));
        }
      }
    }
    AdjacencyMatrix A;
    A.N_ = N;
    A.tau_ = tau;
    A.entries_ = std::move(entries);
    return A;
  }

  int size() const noexcept { return N_; }
  double tau() const noexcept { return tau_; }

  bool operator()(int i, int j) const noexcept {
    return entries_[static_cast<std::size_t>(i) * N_ + j] != 0;
  }

  std::int64_t edge_count() const noexcept {
    std::int64_t total = 0;
    for (auto a : entries_) total += a;
    return total / 2;
  }

  int degree(int i) const noexcept {
    int total = 0;
    for (int j = 0; j < N_; ++j) total += (*this)(i, j);
    return total;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd dense(N_, N_);
    for (int i = 0; i < N_; ++i)
      for (int j = 0; j < N_; ++j) dense(i, j) = (*this)(i, j) ? 1.0 : 0.0;
    return dense;
  }

  friend bool operator==(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

 private:
  friend AdjacencyMatrix threshold_gram(const Eigen::MatrixXd& gram, double tau);

  int N_ = 0;
  double tau_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint8_t> entries_;
};

/// Empirical within/cross connection frequencies of a balanced two-cluster graph.
struct ConnectionRates {
  double p_hat = 0.0;
  double q_hat = 0.0;
  double rate = 0.0;
};

/// Pairwise inner products <x_i, x_j>, restricted to the dataset's active columns.
inline Eigen::MatrixXd gram_matrix(const Dataset& data) {
  const auto active = data.points.leftCols(data.active_columns);
  Eigen::MatrixXd gram(data.size(), data.size());
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(active);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  return gram;
}

inline void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ParameterError(fmt::format("tau must lie in (0, 1) (tau={})", tau));
  }
}

/// A_ij = 1 iff i != j and |gram_ij| >= tau.
inline AdjacencyMatrix threshold_gram(const Eigen::MatrixXd& gram, double tau) {
  check_tau(tau);
  const auto N = static_cast<int>(gram.rows());
  AdjacencyMatrix A;
  A.N_ = N;
  A.tau_ = tau;
  A.entries_.assign(static_cast<std::size_t>(N) * N, 0);
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      if (std::abs(gram(i, j)) >= tau) {
        A.entries_[static_cast<std::size_t>(i) * N + j] = 1;
        A.entries_[static_cast<std::size_t>(j) * N + i] = 1;
      }
    }
  }
  return A;
}

inline AdjacencyMatrix build_adjacency(const Dataset& data, double tau) {
  check_tau(tau);
  return threshold_gram(gram_matrix(data), tau);
}

inline void check_balanced(std::span<const int> labels, int N) {
  if (static_cast<int>(labels.size()) != N) {
    throw ParameterError(
        fmt::format("label vector has length {}, expected {}", labels.size(), N));
  }
  int plus = 0;
  for (int l : labels) {
    if (l != 1 && l != -1) throw ParameterError("labels must be +1 or -1");
    plus += l == 1;
  }
  if (2 * plus != N) {
    throw ParameterError(fmt::format("labels are unbalanced ({} of {} positive)", plus, N));
  }
}

inline ConnectionRates connection_rates(const AdjacencyMatrix& A, std::span<const int> labels) {
  const int N = A.size();
  check_balanced(labels, N);
  std::int64_t within = 0;
  std::int64_t cross = 0;
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      if (!A(i, j)) continue;
      if (labels[i] == labels[j]) {
        ++within;
      } else {
        ++cross;
      }
    }
  }
  const double half = N / 2;
  ConnectionRates r;
  r.p_hat = static_cast<double>(within) / (half * (half - 1.0));
  r.q_hat = static_cast<double>(cross) / (half * half);
  r.rate = 0.5 * (r.p_hat + r.q_hat);
  return r;
}

struct CalibrationOptions {
  int trials = 10;
  int max_steps = 40;
};

struct CalibrationResult {
  double tau = 0.0;
  double rate = 0.0;   // Monte Carlo mean (p_hat + q_hat)/2 at tau
  double p_hat = 0.0;  // Monte Carlo mean at tau
  double q_hat = 0.0;
  double bracket_lower = 0.0;
  double bracket_upper = 1.0;
};

namespace detail {

/// Sorted |<x_i, x_j>| values of one calibration dataset, split by pair type.
struct PairMagnitudes {
  std::vector<double> within;
  std::vector<double> cross;

  static double fraction_at_least(const std::vector<double>& sorted, double tau) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), tau);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
  }
};

}  // namespace detail

/// Bisection on tau against the mean connection rate of a fixed panel of
/// `options.trials` datasets (common random numbers across steps).
inline CalibrationResult calibrate(const SubspacePairSpec& spec, int N, double sigma,
                                   double target_rate, double tolerance, std::uint64_t seed,
                                   const CalibrationOptions& options = {}) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw ParameterError(
        fmt::format("calibrate_tau: target_rate must lie in (0, 1) (got {})", target_rate));
  }
  if (!(tolerance > 0.0)) throw ParameterError("calibrate_tau: tolerance must be positive");
  if (options.trials < 1 || options.max_steps < 1) {
    throw ParameterError("calibrate_tau: trials and max_steps must be positive");
  }

  std::vector<detail::PairMagnitudes> panel(options.trials);
  for (int trial = 0; trial < options.trials; ++trial) {
    const auto trial_seed = rng::derive_seed(seed, trial, 0xCA11B);
    Dataset data = sample_points(spec, N, trial_seed);
    if (sigma > 0.0) data = add_noise(data, sigma, rng::derive_seed(trial_seed, 0, 0x9015E));
    const Eigen::MatrixXd gram = gram_matrix(data);
    auto& mags = panel[trial];
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        (data.labels[i] == data.labels[j] ? mags.within : mags.cross)
            .push_back(std::abs(gram(i, j)));
      }
    }
    std::sort(mags.within.begin(), mags.within.end());
    std::sort(mags.cross.begin(), mags.cross.end());
  }

  auto measure = [&](double tau, double& p, double& q) {
    p = 0.0;
    q = 0.0;
    for (const auto& mags : panel) {
      p += detail::PairMagnitudes::fraction_at_least(mags.within, tau);
      q += detail::PairMagnitudes::fraction_at_least(mags.cross, tau);
    }
    p /= static_cast<double>(panel.size());
    q /= static_cast<double>(panel.size());
    return 0.5 * (p + q);
  };

  // Invariant: rate(lower) >= target > rate(upper). rate(0) = 1 always.
  double lower = 0.0;
  double upper = 1.0;
  double p = 0.0, q = 0.0;
  for (int step = 0; step < options.max_steps; ++step) {
    const double mid = 0.5 * (lower + upper);
    if (measure(mid, p, q) >= target_rate) {
      lower = mid;
    } else {
      upper = mid;
    }
  }

  CalibrationResult best;
  best.bracket_lower = lower;
  best.bracket_upper = upper;
  double p_up = 0.0, q_up = 0.0;
  const double rate_upper = measure(upper, p_up, q_up);
  double p_lo = 0.0, q_lo = 0.0;
  const double rate_lower = lower > 0.0 ? measure(lower, p_lo, q_lo) : 1.0;
  const bool take_upper =
      upper < 1.0 && std::abs(rate_upper - target_rate) <= std::abs(rate_lower - target_rate);
  if (take_upper || lower <= 0.0) {
    best.tau = upper;
    best.rate = rate_upper;
    best.p_hat = p_up;
    best.q_hat = q_up;
  } else {
    best.tau = lower;
    best.rate = rate_lower;
    best.p_hat = p_lo;
    best.q_hat = q_lo;
  }
  if (!(best.tau > 0.0 && best.tau < 1.0) || std::abs(best.rate - target_rate) > tolerance) {
    throw CalibrationError(
        fmt::format("calibrate_tau: best rate {:.6g} misses target {:.6g} by more than {:.3g}; "
                    "bracket [{:.17g}, {:.17g}]",
                    best.rate, target_rate, tolerance, lower, upper),
        lower, upper, best.rate);
  }
  return best;
}

inline double calibrate_tau(const SubspacePairSpec& spec, int N, double sigma, double target_rate,
                            double tolerance, std::uint64_t seed,
                            const CalibrationOptions& options = {}) {
  return calibrate(spec, N, sigma, target_rate, tolerance, seed, options).tau;
}

}  // namespace tipsc
