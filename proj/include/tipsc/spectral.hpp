#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tipsc/eigensolver.hpp"
#include "tipsc/errors.hpp"
#include "tipsc/graph.hpp"

namespace tipsc {

enum class SolverMethod {
  automatic,  // Lanczos, dense fallback for N <= dense_limit on failure
  lanczos,
  dense,
};

struct SolverOptions {
  SolverMethod method = SolverMethod::automatic;
  int dense_limit = 512;
  eigen::LanczosOptions lanczos;
};

/// Top-k eigenpairs of an adjacency matrix with residual certificates.
struct SpectralEmbedding {
  Eigen::VectorXd eigenvalues;   // nonincreasing
  Eigen::MatrixXd eigenvectors;  // N x k, orthonormal columns
  Eigen::VectorXd residuals;     // ||A v - lambda v|| per pair
  int k = 0;
  SolverMethod method_used = SolverMethod::automatic;

  int size() const noexcept { return static_cast<int>(eigenvectors.rows()); }
};

/// Two-way clustering read off the top-2 eigenspace.
struct ClusterAssignment {
  SignVector signs;
  Eigen::VectorXd w;
  /// lambda2 - lambda3, NaN when the embedding has fewer than three pairs.
  double gap = std::numeric_limits<double>::quiet_NaN();
  double projection_norm = 0.0;  // ||P_W u||
  /// Set when gap is not clearly positive: the top-2 eigenspace is not separated from the rest.
  bool gap_warning = false;
};

namespace detail {

/// Deterministic orientation: first entry of magnitude above `floor` is positive.
inline void orient(Eigen::Ref<Eigen::VectorXd> v, double floor = 1e-12) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > floor) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

/// Orients every column, then orders columns of (numerically) tied eigenvalues
/// lexicographically by entries, largest first.
inline void canonicalize(Eigen::VectorXd& values, Eigen::MatrixXd& vectors, double tie_tol) {
  const auto k = static_cast<int>(values.size());
  for (int c = 0; c < k; ++c) orient(vectors.col(c));
  int start = 0;
  while (start < k) {
    int end = start + 1;
    while (end < k && std::abs(values[end] - values[start]) <= tie_tol) ++end;
    if (end - start > 1) {
      std::vector<int> order(end - start);
      std::iota(order.begin(), order.end(), start);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
          const double x = vectors(i, a), y = vectors(i, b);
          if (std::abs(x - y) > 1e-12) return x > y;
        }
        return a < b;
      });
      const Eigen::MatrixXd block = vectors.middleCols(start, end - start);
      const Eigen::VectorXd vals = values.segment(start, end - start);
      for (int c = 0; c < end - start; ++c) {
        vectors.col(start + c) = block.col(order[c] - start);
        values[start + c] = vals[order[c] - start];
      }
    }
    start = end;
  }
}

}  // namespace detail

/// k algebraically largest eigenpairs of a dense symmetric matrix.
inline SpectralEmbedding top_k_eigs(const Eigen::MatrixXd& A, int k,
                                    const SolverOptions& options = {}) {
  const auto N = static_cast<int>(A.rows());
  if (k < 1 || k > N) {
    throw ParameterError(fmt::format("top_k_eigs: need 1 <= k <= N (k={}, N={})", k, N));
  }
  SpectralEmbedding out;
  out.k = k;

  auto run_dense = [&] {
    const eigen::EigenPairs all = eigen::dense_symmetric_eigen(A);
    out.eigenvalues = all.values.head(k);
    out.eigenvectors = all.vectors.leftCols(k);
    out.method_used = SolverMethod::dense;
  };
  auto run_lanczos = [&] {
    const eigen::LanczosResult r = eigen::lanczos_top_k(A, k, options.lanczos);
    out.eigenvalues = r.pairs.values;
    out.eigenvectors = r.pairs.vectors;
    out.method_used = SolverMethod::lanczos;
  };

  switch (options.method) {
    case SolverMethod::dense:
      run_dense();
      break;
    case SolverMethod::lanczos:
      run_lanczos();
      break;
    case SolverMethod::automatic:
      try {
        run_lanczos();
      } catch (const SolverError&) {
        if (N > options.dense_limit) throw;
        run_dense();
      }
      break;
  }

  const double scale = std::max(1.0, A.cwiseAbs().rowwise().sum().maxCoeff());
  detail::canonicalize(out.eigenvalues, out.eigenvectors, 1e-10 * scale);
  out.residuals.resize(k);
  for (int i = 0; i < k; ++i) {
    out.residuals[i] =
        (A * out.eigenvectors.col(i) - out.eigenvalues[i] * out.eigenvectors.col(i)).norm();
  }
  return out;
}

inline SpectralEmbedding top_k_eigs(const AdjacencyMatrix& A, int k,
                                    const SolverOptions& options = {}) {
  return top_k_eigs(A.to_dense(), k, options);
}

/// Unit vector of span(top-2 eigenvectors) orthogonal to the projection of the
/// all-ones direction; its sign pattern is the clustering.
inline ClusterAssignment extract_w(const SpectralEmbedding& embedding,
                                   double degeneracy_threshold = 1e-6) {
  if (embedding.k < 2) throw ParameterError("extract_w: embedding needs at least two pairs");
  const int N = embedding.size();
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(N, 1.0 / std::sqrt(static_cast<double>(N)));
  const auto v1 = embedding.eigenvectors.col(0);
  const auto v2 = embedding.eigenvectors.col(1);
  const double c1 = v1.dot(u);
  const double c2 = v2.dot(u);
  const double projection = std::hypot(c1, c2);

  ClusterAssignment out;
  out.projection_norm = projection;
  if (projection < degeneracy_threshold) {
    throw DegenerateProjectionError(
        fmt::format("extract_w: ||P_W u|| = {:.3e} below {:.1e}", projection, degeneracy_threshold),
        projection);
  }
  out.w = (-c2 * v1 + c1 * v2) / projection;
  out.w.normalize();
  out.signs.resize(N);
  for (int i = 0; i < N; ++i) out.signs[i] = out.w[i] >= 0.0 ? 1 : -1;
  if (embedding.k >= 3) {
    out.gap = embedding.eigenvalues[1] - embedding.eigenvalues[2];
    // Ties come back with roundoff-sized gaps of either sign.
    const double floor = 1e-10 * std::max(1.0, std::abs(embedding.eigenvalues[0]));
    out.gap_warning = !(out.gap > floor);
  }
  return out;
}

}  // namespace tipsc
