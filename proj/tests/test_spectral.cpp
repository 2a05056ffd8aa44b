#include <catch_amalgamated.hpp>

#include <cmath>

#include "tipsc/harness.hpp"
#include "tipsc/spectral.hpp"

using namespace tipsc;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::MatrixXd two_blocks(int N, int cross_edges) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  const int h = N / 2;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (i != j && (i < h) == (j < h)) A(i, j) = 1.0;
  for (int e = 0; e < cross_edges; ++e) {
    const int i = (3 * e) % h, j = h + (5 * e + 1) % h;
    A(i, j) = A(j, i) = 1.0;
  }
  return A;
}

}  // namespace

TEST_CASE("ideal block graph recovers the cluster indicator", "[spectral]") {
  const int N = 20;
  const auto emb = top_k_eigs(two_blocks(N, 0), 3);
  const auto assignment = extract_w(emb);
  Eigen::VectorXd v(N);
  for (int i = 0; i < N; ++i) v[i] = (i < N / 2 ? 1.0 : -1.0) / std::sqrt(double(N));
  CHECK_THAT(std::abs(assignment.w.dot(v)), WithinAbs(1.0, 1e-10));
  CHECK_THAT(assignment.w.norm(), WithinAbs(1.0, 1e-12));
  CHECK_THAT(assignment.w.sum(), WithinAbs(0.0, 1e-10));
  SignVector labels(N);
  for (int i = 0; i < N; ++i) labels[i] = i < N / 2 ? 1 : -1;
  CHECK(error_rate(assignment.signs, labels) == 0.0);
  // Tied top pair, lambda3 = -1: the gap is N/2.
  CHECK_THAT(assignment.gap, WithinAbs(N / 2.0, 1e-10));
  CHECK_FALSE(assignment.gap_warning);
}

TEST_CASE("w is orthogonal to the all-ones direction", "[spectral][property]") {
  for (int cross = 0; cross < 30; cross += 3) {
    const auto assignment = extract_w(top_k_eigs(two_blocks(24, cross), 3));
    CHECK_THAT(assignment.w.sum(), WithinAbs(0.0, 1e-9));
    CHECK_THAT(assignment.w.norm(), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("eigenvector sign choices move w only by a global flip", "[spectral][property]") {
  auto emb = top_k_eigs(two_blocks(16, 6), 3);
  const auto a = extract_w(emb);
  emb.eigenvectors.col(0) = -emb.eigenvectors.col(0);
  const auto b = extract_w(emb);
  CHECK((a.w + b.w).cwiseAbs().maxCoeff() < 1e-12);
  SignVector labels(16);
  for (int i = 0; i < 16; ++i) labels[i] = i < 8 ? 1 : -1;
  CHECK(error_rate(a.signs, labels) == error_rate(b.signs, labels));
  emb.eigenvectors.col(1) = -emb.eigenvectors.col(1);
  const auto c = extract_w(emb);
  CHECK((a.w - c.w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a top eigenspace orthogonal to the ones vector is degenerate", "[spectral]") {
  Eigen::MatrixXd V(4, 2);
  V << 1, 0, -1, 0, 0, 1, 0, -1;
  V /= std::sqrt(2.0);
  const Eigen::MatrixXd A = 3.0 * V.col(0) * V.col(0).transpose() + 2.0 * V.col(1) * V.col(1).transpose();
  const auto emb = top_k_eigs(A, 3);
  try {
    (void)extract_w(emb);
    FAIL("expected DegenerateProjectionError");
  } catch (const DegenerateProjectionError& e) {
    CHECK(e.projection_norm() < 1e-6);
    CHECK(std::string(e.kind()) == "degenerate_projection");
  }
}

TEST_CASE("overlapping top pair raises the gap warning", "[spectral]") {
  // Three disjoint triangles: lambda1 = lambda2 = lambda3 = 2.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(9, 9);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) A(3 * b + i, 3 * b + j) = 1.0;
  const auto assignment = extract_w(top_k_eigs(A, 3));
  CHECK(assignment.gap_warning);
}

TEST_CASE("default regime clusters accurately", "[spectral][statistics]") {
  ExperimentConfig config;
  config.trials = 100;
  config.master_seed = 2024;
  const auto results = run_trials(prepare(config));
  int good = 0;
  for (const auto& r : results) good += r.gamma <= 0.05;
  INFO("trials with gamma <= 0.05: " << good);
  CHECK(good >= 90);
}
