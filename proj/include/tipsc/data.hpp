#pragma once

// Semi-random two-subspace model.
//
// Subspace S1 is spanned by coordinate vectors e_0..e_{d-1}. In the canonical
// overlap construction S2 is spanned by e_{d-s}..e_{2d-s-1}, so the two share s
// coordinates and aff = sqrt(s/d). A general singular-value profile lambda_k is
// realised as U2 e_k = lambda_k e_k + sqrt(1 - lambda_k^2) e_{d+r(k)} where r
// enumerates the non-unit lambdas, which makes U2^T U1 = diag(lambda). Bases are
// never materialised; points are written coordinate-wise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tipsc/errors.hpp"
#include "tipsc/rng.hpp"

namespace tipsc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ground-truth membership (+1 for S1, -1 for S2) or a clustering result.
using SignVector = std::vector<int>;

class SubspacePairSpec {
 public:
  SubspacePairSpec() = default;

  int d() const noexcept { return d_; }
  int n() const noexcept { return n_; }
  /// Overlap dimension: number of unit singular values of U1^T U2.
  int s() const noexcept { return s_; }
  bool canonical() const noexcept { return canonical_; }

  /// Singular values of U1^T U2, nonincreasing.
  std::span<const double> spectrum() const noexcept { return spectrum_; }

  double aff_squared() const noexcept { return energy_ / d_; }
  double aff() const noexcept { return std::sqrt(aff_squared()); }
  double kappa() const noexcept { return 1.0 - aff_squared(); }

  /// Columns of the ambient space that any clean point can touch.
  int active_columns() const noexcept { return active_columns_; }

  /// Writes U * coeffs into `row` (length n). `first` selects S1 over S2.
  void embed(bool first, std::span<const double> coeffs, std::span<double> row) const {
    std::fill(row.begin(), row.end(), 0.0);
    if (first) {
      std::copy(coeffs.begin(), coeffs.end(), row.begin());
      return;
    }
    if (canonical_) {
      std::copy(coeffs.begin(), coeffs.end(), row.begin() + (d_ - s_));
      return;
    }
    int spill = d_;
    for (int k = 0; k < d_; ++k) {
      const double lambda = spectrum_[k];
      row[k] += lambda * coeffs[k];
      if (lambda < 1.0) row[spill++] += std::sqrt(1.0 - lambda * lambda) * coeffs[k];
    }
  }

  /// sum_k lambda_k^2 a_k^2 for a coefficient vector of a point in S1 (`first`) or S2.
  double overlap_energy(bool first, std::span<const double> coeffs) const {
    double total = 0.0;
    if (canonical_) {
      const int offset = first ? d_ - s_ : 0;
      for (int k = 0; k < s_; ++k) total += coeffs[offset + k] * coeffs[offset + k];
      return total;
    }
    for (int k = 0; k < d_; ++k) total += spectrum_[k] * spectrum_[k] * coeffs[k] * coeffs[k];
    return total;
  }

  friend bool operator==(const SubspacePairSpec&, const SubspacePairSpec&) = default;

 private:
  friend SubspacePairSpec make_bases(int d, int s, int n);
  friend SubspacePairSpec make_bases(int d, std::vector<double> spectrum, int n);

  int d_ = 0;
  int n_ = 0;
  int s_ = 0;
  bool canonical_ = true;
  std::vector<double> spectrum_;
  double energy_ = 0.0;  // sum of squared singular values
  int active_columns_ = 0;
};

/// Canonical overlap construction: s shared coordinate directions.
inline SubspacePairSpec make_bases(int d, int s, int n) {
  if (d <= 0 || n <= 0) {
    throw ParameterError(fmt::format("make_bases: d and n must be positive (d={}, n={})", d, n));
  }
  if (s < 0 || s > d) {
    throw ParameterError(fmt::format("make_bases: requires 0 <= s <= d (s={}, d={})", s, d));
  }
  if (2 * d - s > n) {
    throw ParameterError(
        fmt::format("make_bases: requires 2d - s <= n (2d - s = {}, n = {})", 2 * d - s, n));
  }
  SubspacePairSpec spec;
  spec.d_ = d;
  spec.n_ = n;
  spec.s_ = s;
  spec.canonical_ = true;
  spec.spectrum_.assign(d, 0.0);
  std::fill(spec.spectrum_.begin(), spec.spectrum_.begin() + s, 1.0);
  spec.energy_ = static_cast<double>(s);
  spec.active_columns_ = 2 * d - s;
  return spec;
}

/// General pair with prescribed singular values of U1^T U2 (each in [0, 1]).
inline SubspacePairSpec make_bases(int d, std::vector<double> spectrum, int n) {
  if (d <= 0 || n <= 0) {
    throw ParameterError(fmt::format("make_bases: d and n must be positive (d={}, n={})", d, n));
  }
  if (static_cast<int>(spectrum.size()) != d) {
    throw ParameterError(
        fmt::format("make_bases: spectrum has {} values, expected d = {}", spectrum.size(), d));
  }
  for (double lambda : spectrum) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ParameterError("make_bases: singular values must lie in [0, 1]");
    }
  }
  std::sort(spectrum.begin(), spectrum.end(), std::greater<>());
  const auto unit = static_cast<int>(std::count(spectrum.begin(), spectrum.end(), 1.0));
  const int needed = d + (d - unit);
  if (needed > n) {
    throw ParameterError(fmt::format(
        "make_bases: requires 2d - (#unit singular values) <= n ({} > n = {})", needed, n));
  }
  SubspacePairSpec spec;
  spec.d_ = d;
  spec.n_ = n;
  spec.s_ = unit;
  spec.canonical_ = false;
  spec.energy_ = 0.0;
  for (double lambda : spectrum) spec.energy_ += lambda * lambda;
  spec.spectrum_ = std::move(spectrum);
  spec.active_columns_ = needed;
  return spec;
}

/// Labeled unit-norm samples from the two subspaces.
struct Dataset {
  SubspacePairSpec spec;
  RowMatrix points;   // N x n, unit rows
  SignVector labels;  // +1 for the first N/2 rows, -1 after
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  /// Leading columns that may be nonzero; the rest are exactly zero.
  int active_columns = 0;
  /// Pre-normalisation Gaussian coefficients a_i (N x d), when provenance is retained.
  std::optional<RowMatrix> coefficients;
  /// ||x_i + z_i|| before renormalisation; empty for clean data.
  std::vector<double> prenormalization_norms;

  int size() const noexcept { return static_cast<int>(points.rows()); }
  double rho() const noexcept { return static_cast<double>(size()) / (2.0 * spec.d()); }
};

/// N points, the first half on S1 and the rest on S2, each U * a/||a|| with a ~ N(0, I/d).
inline Dataset sample_points(const SubspacePairSpec& spec, int N, std::uint64_t seed) {
  if (N < 4 || N % 2 != 0) {
    throw ParameterError(fmt::format("sample_points: N must be even and >= 4 (N={})", N));
  }
  const int d = spec.d();
  Dataset data;
  data.spec = spec;
  data.seed = seed;
  data.sigma = 0.0;
  data.active_columns = spec.active_columns();
  data.points = RowMatrix::Zero(N, spec.n());
  data.coefficients = RowMatrix(N, d);
  data.labels.resize(N);

  const rng::GaussianStream gauss(seed, rng::Stream::subspace_coefficients);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> unit(d);
  for (int i = 0; i < N; ++i) {
    std::span<double> a(data.coefficients->row(i).data(), d);
    gauss.fill(static_cast<std::uint64_t>(i), a, scale);
    double norm2 = 0.0;
    for (double v : a) norm2 += v * v;
    const double inv = 1.0 / std::sqrt(norm2);
    for (int k = 0; k < d; ++k) unit[k] = a[k] * inv;
    const bool first = i < N / 2;
    spec.embed(first, unit, std::span<double>(data.points.row(i).data(), spec.n()));
    data.labels[i] = first ? 1 : -1;
  }
  return data;
}

/// Adds z_i ~ N(0, sigma^2/n I_n) to each row and renormalises.
inline Dataset add_noise(const Dataset& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) {
    throw ParameterError(fmt::format("add_noise: sigma must be >= 0 (sigma={})", sigma));
  }
  if (clean.sigma != 0.0) {
    throw ParameterError("add_noise: input dataset is already noisy");
  }
  Dataset noisy = clean;
  noisy.noise_seed = seed;
  if (sigma == 0.0) return noisy;

  const int n = clean.spec.n();
  const rng::GaussianStream gauss(seed, rng::Stream::noise);
  const double scale = sigma / std::sqrt(static_cast<double>(n));
  std::vector<double> z(n);
  noisy.prenormalization_norms.resize(clean.size());
  for (int i = 0; i < clean.size(); ++i) {
    gauss.fill(static_cast<std::uint64_t>(i), z, scale);
    auto row = noisy.points.row(i);
    for (int k = 0; k < n; ++k) row[k] += z[k];
    const double norm = row.norm();
    noisy.prenormalization_norms[i] = norm;
    row /= norm;
  }
  noisy.sigma = sigma;
  noisy.active_columns = n;
  return noisy;
}

/// sigma for a given SNR in dB, where SNR = 10 log10(1/sigma^2).
inline double snr_to_sigma(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }

/// Inverse of snr_to_sigma.
inline double sigma_to_snr(double sigma) { return -20.0 * std::log10(sigma); }

}  // namespace tipsc
