#pragma once

// Symmetric eigensolvers.
//
// dense path:   Householder tridiagonalisation followed by implicit QL with
//               Wilkinson-style shifts (the EISPACK tred2/tql2 pair).
// Lanczos path: single-vector Lanczos with full (twice-applied Gram-Schmidt)
//               reorthogonalisation; on invariant-subspace breakdown it
//               continues from a fresh deterministic vector, so repeated
//               eigenvalues are still found. Convergence is judged on the
//               Ritz residual estimate |beta_m * s_mi| and certified by an
//               explicit ||A y - theta y|| before returning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tipsc/errors.hpp"
#include "tipsc/rng.hpp"

namespace tipsc::eigen {

/// Eigenpairs sorted by nonincreasing eigenvalue.
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // one column per eigenvalue
};

namespace detail {

/// EISPACK tred2: reduce symmetric V (in place) to tridiagonal form.
/// On exit V holds the orthogonal transform, d the diagonal, e the subdiagonal (e[0] = 0).
inline void householder_tridiagonalize(Eigen::MatrixXd& V, Eigen::VectorXd& d,
                                       Eigen::VectorXd& e) {
  const auto n = static_cast<int>(V.rows());
  d.resize(n);
  e.resize(n);
  for (int j = 0; j < n; ++j) d[j] = V(n - 1, j);

  for (int i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (int j = 0; j < i; ++j) {
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
        V(j, i) = 0.0;
      }
    } else {
      for (int k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (int j = 0; j < i; ++j) e[j] = 0.0;

      for (int j = 0; j < i; ++j) {
        f = d[j];
        V(j, i) = f;
        g = e[j] + V(j, j) * f;
        for (int k = j + 1; k <= i - 1; ++k) {
          g += V(k, j) * d[k];
          e[k] += V(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (int j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (int j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (int k = j; k <= i - 1; ++k) V(k, j) -= (f * e[k] + g * d[k]);
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  // Accumulate transformations.
  for (int i = 0; i < n - 1; ++i) {
    V(n - 1, i) = V(i, i);
    V(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (int k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
        for (int k = 0; k <= i; ++k) V(k, j) -= g * d[k];
      }
    }
    for (int k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
  }
  for (int j = 0; j < n; ++j) {
    d[j] = V(n - 1, j);
    V(n - 1, j) = 0.0;
  }
  V(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

/// EISPACK tql2: implicit QL on the tridiagonal (d, e) with e[i] coupling i-1 and i.
/// Rotations are accumulated into V. Eigenvalues are left unsorted in d.
inline void implicit_ql(Eigen::VectorXd& d, Eigen::VectorXd& e, Eigen::MatrixXd& V) {
  const auto n = static_cast<int>(d.size());
  if (n == 0) return;
  const auto rows = static_cast<int>(V.rows());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  const int max_sweeps = 60;
  for (int l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    int m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > max_sweeps) {
          throw SolverError(fmt::format("implicit QL did not converge at index {}", l));
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (int i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (int i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (int k = 0; k < rows; ++k) {
            h = V(k, i + 1);
            V(k, i + 1) = s * V(k, i) + c * h;
            V(k, i) = c * V(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

inline EigenPairs sorted_descending(const Eigen::VectorXd& d, const Eigen::MatrixXd& V) {
  const auto n = static_cast<int>(d.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return d[a] > d[b]; });
  EigenPairs out;
  out.values.resize(n);
  out.vectors.resize(V.rows(), n);
  for (int i = 0; i < n; ++i) {
    out.values[i] = d[order[i]];
    out.vectors.col(i) = V.col(order[i]);
  }
  return out;
}

}  // namespace detail

/// Full spectrum of a symmetric tridiagonal matrix; offdiag[i] couples i and i+1.
inline EigenPairs tridiagonal_eigen(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  const auto n = static_cast<int>(diag.size());
  Eigen::VectorXd d = diag;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (int i = 1; i < n; ++i) e[i] = offdiag[i - 1];
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  detail::implicit_ql(d, e, V);
  return detail::sorted_descending(d, V);
}

/// Full spectrum of a dense symmetric matrix (only the lower triangle is trusted).
inline EigenPairs dense_symmetric_eigen(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ParameterError("dense_symmetric_eigen: matrix is not square");
  const auto n = static_cast<int>(A.rows());
  if (n == 0) return {};
  Eigen::MatrixXd V = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd d, e;
  detail::householder_tridiagonalize(V, d, e);
  detail::implicit_ql(d, e, V);
  return detail::sorted_descending(d, V);
}

struct LanczosOptions {
  /// Krylov dimension cap; 0 means N (where the factorisation is exact).
  int max_krylov = 0;
  /// Required ||A y - theta y|| relative to the spectral scale estimate.
  double tolerance = 1e-11;
  /// Ritz extraction cadence (in Lanczos steps).
  int check_interval = 4;
  std::uint64_t start_seed = 0;
};

struct LanczosResult {
  EigenPairs pairs;
  Eigen::VectorXd residuals;  // explicit ||A y - theta y||
  int krylov_dimension = 0;
  int restarts = 0;
};

using MatVec = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// k algebraically largest eigenpairs of the N x N symmetric operator `apply`.
inline LanczosResult lanczos_top_k(const MatVec& apply, int N, int k,
                                   const LanczosOptions& options = {}) {
  if (k < 1 || k > N) {
    throw ParameterError(fmt::format("lanczos_top_k: need 1 <= k <= N (k={}, N={})", k, N));
  }
  const int max_m = options.max_krylov > 0 ? std::min(options.max_krylov, N) : N;
  if (max_m < k) throw ParameterError("lanczos_top_k: Krylov cap smaller than k");

  // Start vectors are a deterministic function of (N, seed, restart index).
  const rng::UniformStream uniform(rng::derive_seed(options.start_seed, N, 0x1A4C205),
                                   rng::Stream::start_vector);
  int restarts = 0;
  auto fresh_vector = [&](Eigen::VectorXd& v) {
    v.resize(N);
    for (int i = 0; i < N; ++i) v[i] = uniform.at(restarts, i) - 0.5;
    ++restarts;
  };

  Eigen::MatrixXd Q(N, max_m);
  std::vector<double> alpha;
  std::vector<double> beta;  // beta[j] couples q_j and q_{j+1}
  alpha.reserve(max_m);
  beta.reserve(max_m);

  auto orthogonalize = [&](Eigen::VectorXd& w, int m) {
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeffs = Q.leftCols(m).transpose() * w;
      w.noalias() -= Q.leftCols(m) * coeffs;
    }
  };

  Eigen::VectorXd q;
  fresh_vector(q);
  q.normalize();
  Q.col(0) = q;

  Eigen::VectorXd w(N);
  double scale = 0.0;  // running estimate of ||A||
  double next_beta = 0.0;

  auto ritz = [&](int m) {
    Eigen::VectorXd diag(m), off(std::max(m - 1, 0));
    for (int i = 0; i < m; ++i) diag[i] = alpha[i];
    for (int i = 0; i + 1 < m; ++i) off[i] = beta[i];
    return tridiagonal_eigen(diag, off);
  };

  for (int j = 0; j < max_m; ++j) {
    apply(Q.col(j), w);
    const double a = Q.col(j).dot(w);
    alpha.push_back(a);
    w -= a * Q.col(j);
    if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
    orthogonalize(w, j + 1);
    const double b = w.norm();
    scale = std::max({scale, std::abs(a), b});
    const int m = j + 1;

    const bool invariant = b <= 1e-10 * std::max(scale, 1.0);
    next_beta = invariant ? 0.0 : b;

    const bool last = m == max_m;
    const bool check = m >= k && (last || invariant || (m - k) % options.check_interval == 0);
    if (check) {
      const EigenPairs theta = ritz(m);
      double spectral_scale = std::max(std::abs(theta.values[0]), std::abs(theta.values[m - 1]));
      spectral_scale = std::max(spectral_scale, 1.0);
      bool estimated = true;
      for (int i = 0; i < k; ++i) {
        if (std::abs(next_beta * theta.vectors(m - 1, i)) > options.tolerance * spectral_scale) {
          estimated = false;
          break;
        }
      }
      // Only an exhausted space (m == N) can certify that no eigenvalue was missed
      // after an invariant breakdown; otherwise keep exploring from a fresh vector.
      const bool exhausted = m == N;
      if ((estimated && !invariant) || exhausted || last) {
        LanczosResult out;
        out.krylov_dimension = m;
        out.restarts = restarts - 1;
        out.pairs.values = theta.values.head(k);
        out.pairs.vectors = Q.leftCols(m) * theta.vectors.leftCols(k);
        out.residuals.resize(k);
        Eigen::VectorXd Ay(N);
        bool certified = true;
        for (int i = 0; i < k; ++i) {
          Eigen::VectorXd y = out.pairs.vectors.col(i);
          y.normalize();
          out.pairs.vectors.col(i) = y;
          apply(y, Ay);
          out.residuals[i] = (Ay - out.pairs.values[i] * y).norm();
          if (out.residuals[i] > options.tolerance * spectral_scale) certified = false;
        }
        if (certified) return out;
        if (last) {
          throw SolverError(
              fmt::format("Lanczos did not converge within Krylov dimension {}", m),
              std::vector<double>(out.residuals.data(), out.residuals.data() + k));
        }
      }
    }
    if (m == max_m) break;

    if (invariant) {
      // Invariant subspace reached: continue in its orthogonal complement.
      Eigen::VectorXd v;
      double norm = 0.0;
      for (int attempt = 0; attempt < 8 && norm < 1e-8; ++attempt) {
        fresh_vector(v);
        orthogonalize(v, m);
        norm = v.norm();
      }
      if (norm < 1e-8) throw SolverError("Lanczos could not extend the Krylov basis");
      beta.push_back(0.0);
      Q.col(m) = v / norm;
    } else {
      beta.push_back(b);
      Q.col(m) = w / b;
    }
  }
  throw SolverError("Lanczos terminated without a result");
}

/// Lanczos on an explicit dense symmetric matrix.
inline LanczosResult lanczos_top_k(const Eigen::MatrixXd& A, int k,
                                   const LanczosOptions& options = {}) {
  const MatVec apply = [&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = A * x; };
  return lanczos_top_k(apply, static_cast<int>(A.rows()), k, options);
}

}  // namespace tipsc::eigen
