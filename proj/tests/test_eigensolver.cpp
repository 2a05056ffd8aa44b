#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tipsc/eigensolver.hpp"
#include "tipsc/spectral.hpp"

using namespace tipsc;
using Catch::Matchers::WithinAbs;

namespace {

void check_against_jacobi(const Eigen::MatrixXd& A, SolverMethod method) {
  const int k = 3;
  SolverOptions options;
  options.method = method;
  const SpectralEmbedding emb = top_k_eigs(A, k, options);
  const oracle::Spectrum ref = oracle::jacobi(A);
  for (int i = 0; i < k; ++i) {
    CHECK_THAT(emb.eigenvalues[i], WithinAbs(ref.values[i], 1e-8));
    CHECK(emb.residuals[i] < 1e-8);
  }
  const Eigen::MatrixXd gram = emb.eigenvectors.transpose() * emb.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
  // Compare subspaces only where the spectrum separates them from the rest.
  for (int m = 1; m <= k; ++m) {
    if (ref.values[m - 1] - ref.values[m] <= 1e-4) continue;
    const double angle = oracle::max_principal_angle(emb.eigenvectors.leftCols(m),
                                                     ref.vectors.leftCols(m));
    CHECK(angle < 1e-6);
  }
}

}  // namespace

TEST_CASE("top-3 eigenpairs agree with cyclic Jacobi on random graphs", "[eigen]") {
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + (trial * 7) % 51;
    const double p = 0.1 + 0.04 * (trial % 10);
    const Eigen::MatrixXd A = oracle::random_adjacency(n, p, 1000 + trial);
    INFO("trial " << trial << ", n = " << n << ", p = " << p);
    check_against_jacobi(A, SolverMethod::lanczos);
    check_against_jacobi(A, SolverMethod::dense);
    check_against_jacobi(A, SolverMethod::automatic);
  }
}

TEST_CASE("complete graph K4", "[eigen]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
  for (auto method : {SolverMethod::lanczos, SolverMethod::dense}) {
    SolverOptions options;
    options.method = method;
    const auto emb = top_k_eigs(A, 3, options);
    CHECK_THAT(emb.eigenvalues[0], WithinAbs(3.0, 1e-12));
    CHECK_THAT(emb.eigenvalues[1], WithinAbs(-1.0, 1e-12));
    CHECK_THAT(emb.eigenvalues[2], WithinAbs(-1.0, 1e-12));
    CHECK_THAT(std::abs(emb.eigenvectors.col(0).sum()), WithinAbs(2.0, 1e-12));
  }
}

TEST_CASE("two disjoint edges", "[eigen]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A(0, 1) = A(1, 0) = A(2, 3) = A(3, 2) = 1.0;
  for (auto method : {SolverMethod::lanczos, SolverMethod::dense}) {
    SolverOptions options;
    options.method = method;
    const auto emb = top_k_eigs(A, 3, options);
    CHECK_THAT(emb.eigenvalues[0], WithinAbs(1.0, 1e-12));
    CHECK_THAT(emb.eigenvalues[1], WithinAbs(1.0, 1e-12));
    CHECK_THAT(emb.eigenvalues[2], WithinAbs(-1.0, 1e-12));
  }
}

TEST_CASE("tied eigenvectors come back in a canonical order", "[eigen]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A(0, 1) = A(1, 0) = A(2, 3) = A(3, 2) = 1.0;
  SolverOptions lanczos, dense;
  lanczos.method = SolverMethod::lanczos;
  dense.method = SolverMethod::dense;
  const auto a = top_k_eigs(A, 2, lanczos);
  const auto b = top_k_eigs(A, 2, dense);
  // Within a tied block the solvers may return any rotation, so compare projectors.
  const Eigen::MatrixXd pa = a.eigenvectors * a.eigenvectors.transpose();
  const Eigen::MatrixXd pb = b.eigenvectors * b.eigenvectors.transpose();
  CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-10);
  for (const auto* emb : {&a, &b}) {
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 4; ++i) {
        if (std::abs(emb->eigenvectors(i, c)) > 1e-12) {
          CHECK(emb->eigenvectors(i, c) > 0.0);
          break;
        }
      }
    }
  }
}

TEST_CASE("Rayleigh quotients reproduce the eigenvalues", "[eigen][property]") {
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd A = oracle::random_adjacency(80, 0.2, 50 + trial);
    const auto emb = top_k_eigs(A, 3);
    for (int i = 0; i < 3; ++i) {
      const auto v = emb.eigenvectors.col(i);
      CHECK_THAT(v.dot(A * v), WithinAbs(emb.eigenvalues[i], 1e-10));
    }
    CHECK(emb.eigenvalues[0] >= emb.eigenvalues[1]);
    CHECK(emb.eigenvalues[1] >= emb.eigenvalues[2]);
  }
}

TEST_CASE("Lanczos on an operator matches the dense path", "[eigen]") {
  const Eigen::MatrixXd A = oracle::random_adjacency(300, 0.05, 8);
  const eigen::MatVec apply = [&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = A * x; };
  const auto result = eigen::lanczos_top_k(apply, 300, 3);
  const auto dense = eigen::dense_symmetric_eigen(A);
  for (int i = 0; i < 3; ++i) {
    CHECK_THAT(result.pairs.values[i], WithinAbs(dense.values[i], 1e-9));
    CHECK(result.residuals[i] < 1e-8);
  }
  CHECK(result.krylov_dimension <= 300);
}

TEST_CASE("Lanczos survives invariant subspaces", "[eigen]") {
  // Identity-like spectra make the Krylov space collapse after one step.
  const Eigen::MatrixXd A = 2.0 * Eigen::MatrixXd::Identity(12, 12);
  const auto r = eigen::lanczos_top_k(A, 3);
  for (int i = 0; i < 3; ++i) CHECK_THAT(r.pairs.values[i], WithinAbs(2.0, 1e-12));
  const Eigen::MatrixXd g = r.pairs.vectors.transpose() * r.pairs.vectors;
  CHECK((g - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tridiagonal solver on a known spectrum", "[eigen]") {
  // Path graph P_n: eigenvalues 2 cos(pi j / (n + 1)).
  const int n = 9;
  const auto pairs =
      eigen::tridiagonal_eigen(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n - 1));
  for (int j = 1; j <= n; ++j)
    CHECK_THAT(pairs.values[j - 1], WithinAbs(2.0 * std::cos(M_PI * j / (n + 1)), 1e-13));
}

TEST_CASE("invalid k is rejected", "[eigen]") {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(top_k_eigs(A, 0), ParameterError);
  CHECK_THROWS_AS(top_k_eigs(A, 4), ParameterError);
}
