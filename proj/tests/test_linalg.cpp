#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <cmath>
#include <set>

#include "sqsn/linalg.hpp"
#include "test_support.hpp"

using namespace sqsn;
using namespace sqsn::testing;

namespace {

Eigen::MatrixXd random_spd(Rng& rng, int n, int nnz_per_col) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < nnz_per_col; ++k) B(uniform_int(rng, 0, n - 1), j) = uniform(rng, -1, 1);
  }
  Eigen::MatrixXd S = B * B.transpose();
  S.diagonal().array() += 0.1;
  return S;
}

Eigen::MatrixXd permutation_matrix(const Eigen::VectorXi& perm) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(perm.size(), perm.size());
  for (Eigen::Index i = 0; i < perm.size(); ++i) P(perm[i], i) = 1.0;
  return P;
}

}  // namespace

TEST_CASE("sparse_cholesky: identity returns the right-hand side") {
  const auto S = SparseSymMatrix::from_dense(Eigen::MatrixXd::Identity(3, 3));
  const auto f = sparse_cholesky(S);
  const Eigen::Vector3d x = f.solve(Eigen::Vector3d(1, 2, 3));
  CHECK((x - Eigen::Vector3d(1, 2, 3)).norm() < 1e-15);
}

TEST_CASE("sparse_cholesky: 2x2 system") {
  Eigen::Matrix2d M;
  M << 4, 2, 2, 3;
  const auto S = SparseSymMatrix::from_dense(M);
  const Eigen::Vector2d x = sparse_cholesky(S).solve(Eigen::Vector2d(8, 7));
  // Inverse by hand: (1/8)[[3,-2],[-2,4]]·(8,7) = (1.25, 1.5).
  CHECK(x[0] == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("sparse_cholesky: zero pivot is rejected") {
  Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
  M(1, 1) = 0.0;
  CHECK_THROWS_AS(sparse_cholesky(SparseSymMatrix::from_dense(M)), NotPositiveDefinite);
  Eigen::Matrix2d N;
  N << 1, 2, 2, 1;
  CHECK_THROWS_AS(sparse_cholesky(SparseSymMatrix::from_dense(N)), NotPositiveDefinite);
}

TEST_CASE("sparse_cholesky: random SPD residual and reconstruction") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = uniform_int(rng, 1, 200);
    const Eigen::MatrixXd M = random_spd(rng, n, 4);
    const auto S = SparseSymMatrix::from_dense(M);
    const auto f = sparse_cholesky(S);
    const Eigen::VectorXd b = random_vector(rng, n);
    const Eigen::VectorXd x = f.solve(b);
    CHECK((M * x - b).norm() <= 1e-10 * (1.0 + b.norm()));

    const Eigen::MatrixXd L = Eigen::MatrixXd(f.lower_factor());
    const Eigen::MatrixXd P = permutation_matrix(f.permutation());
    const Eigen::MatrixXd rebuilt = P.transpose() * L * L.transpose() * P;
    CHECK((rebuilt - M).norm() <= 1e-10 * M.norm());
  }
}

TEST_CASE("SparseSymMatrix: construction and products") {
  std::vector<Triplet> t = {{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 0.5}, {2, 2, 3.0}};
  const auto S = SparseSymMatrix::from_triplets(3, t);
  Eigen::Matrix3d expected;
  expected << 2, 1.5, 0, 1.5, 0, 0, 0, 0, 3;
  CHECK((S.to_dense() - expected).norm() == 0.0);
  CHECK(S.diagonal()[1] == 0.0);
  const Eigen::Vector3d x(1, -2, 0.5);
  CHECK((S.multiply(x) - expected * x).norm() < 1e-15);
  const auto shifted = S.diagonal_shifted(0.5);
  CHECK(shifted.to_dense()(0, 0) == doctest::Approx(3.0));
  CHECK(shifted.to_dense()(0, 1) == doctest::Approx(1.5));

  SparseMatrix missing_diag(2, 2);
  missing_diag.insert(1, 0) = 1.0;
  missing_diag.insert(1, 1) = 1.0;
  CHECK_THROWS_AS(SparseSymMatrix{missing_diag}, std::invalid_argument);
}

TEST_CASE("incomplete_cholesky: diagonal matrix is solved exactly") {
  const Eigen::VectorXd d = (Eigen::VectorXd(4) << 1, 2, 5, 0.5).finished();
  const auto S = SparseSymMatrix::from_dense(d.asDiagonal().toDenseMatrix());
  const auto ic = incomplete_cholesky(S);
  const Eigen::VectorXd r = Eigen::VectorXd::Ones(4);
  CHECK((ic.apply(r) - d.cwiseInverse()).norm() < 1e-15);
  CHECK(ic.shift() == 0.0);
}

TEST_CASE("incomplete_cholesky: tridiagonal pattern equals the exact factor") {
  const int n = 30;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    M(i, i) = 4.0;
    if (i + 1 < n) M(i, i + 1) = M(i + 1, i) = -1.0;
  }
  const auto S = SparseSymMatrix::from_dense(M);
  const auto ic = incomplete_cholesky(S);
  const Eigen::MatrixXd L = Eigen::MatrixXd(ic.lower_factor());
  const Eigen::MatrixXd exact = M.llt().matrixL();
  CHECK((L - exact).norm() < 1e-12);
}

TEST_CASE("incomplete_cholesky: breakdown after shifts raises DecompositionFailed") {
  Eigen::Matrix2d N;
  N << 1, 2, 2, 1;
  CHECK_THROWS_AS(incomplete_cholesky(SparseSymMatrix::from_dense(N)), DecompositionFailed);
}

TEST_CASE("pcg: identity converges in one step") {
  const auto S = SparseSymMatrix::from_dense(Eigen::MatrixXd::Identity(5, 5));
  const Eigen::VectorXd b = (Eigen::VectorXd(5) << 1, -2, 3, 0.5, 4).finished();
  const auto res = pcg(as_operator(S), b, nullptr, {});
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK((res.x - b).norm() < 1e-14);
}

TEST_CASE("pcg: diagonal operator") {
  Eigen::VectorXd d(10);
  for (int i = 0; i < 10; ++i) d[i] = i + 1;
  const auto S = SparseSymMatrix::from_dense(d.asDiagonal().toDenseMatrix());
  const auto res = pcg(as_operator(S), Eigen::VectorXd::Ones(10), nullptr, {});
  CHECK(res.converged);
  CHECK((res.x - d.cwiseInverse()).norm() < 1e-9);
}

TEST_CASE("pcg: random 100x100 SPD within 100 iterations") {
  Rng rng(11);
  const Eigen::MatrixXd M = random_spd(rng, 100, 3);
  const auto S = SparseSymMatrix::from_dense(M);
  const Eigen::VectorXd b = random_vector(rng, 100);
  PcgOptions opts;
  opts.tol = 1e-10;
  opts.max_iter = 100;
  const auto res = pcg(as_operator(S), b, nullptr, opts);
  CHECK((M * res.x - b).norm() <= 1e-10 * (1.0 + b.norm()));
  CHECK(res.iterations <= 100);
}

TEST_CASE("pcg: IC(0) preconditioning reduces the iteration count") {
  Rng rng(5);
  const int n = 50;
  // Badly scaled sparse SPD matrix so that preconditioning matters.
  Eigen::MatrixXd M = random_spd(rng, n, 5);
  Eigen::VectorXd scale(n);
  for (int i = 0; i < n; ++i) scale[i] = std::pow(10.0, uniform(rng, -2, 2));
  M = scale.asDiagonal() * M * scale.asDiagonal();
  const auto S = SparseSymMatrix::from_dense(M);
  const Eigen::VectorXd b = random_vector(rng, n);
  PcgOptions opts;
  opts.tol = 1e-10;
  opts.max_iter = 10 * n;
  const auto plain = pcg(as_operator(S), b, nullptr, opts);
  const auto ic = incomplete_cholesky(S);
  const auto pre = pcg(as_operator(S), b, &ic, opts);
  CHECK(pre.converged);
  CHECK(pre.iterations < plain.iterations);
}

TEST_CASE("pcg: energy norm of the error is monotone") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = uniform_int(rng, 5, 50);
    const Eigen::MatrixXd M = random_spd(rng, n, 3);
    const auto S = SparseSymMatrix::from_dense(M);
    const Eigen::VectorXd b = random_vector(rng, n);
    const Eigen::VectorXd exact = M.llt().solve(b);
    std::vector<double> energy;
    PcgOptions opts;
    opts.tol = 1e-13;
    opts.on_iterate = [&](int, const Eigen::VectorXd& x) {
      const Eigen::VectorXd e = x - exact;
      energy.push_back(std::sqrt(e.dot(M * e)));
    };
    const bool use_ic = trial % 2 == 0;
    std::optional<IncompleteCholesky> ic;
    if (use_ic) ic.emplace(incomplete_cholesky(S));
    pcg(as_operator(S), b, use_ic ? &*ic : nullptr, opts);
    REQUIRE(energy.size() >= 1);
    const double start = std::sqrt(exact.dot(M * exact));
    CHECK(energy.front() <= start * (1 + 1e-12));
    for (std::size_t k = 1; k < energy.size(); ++k) {
      CHECK(energy[k] <= energy[k - 1] * (1 + 1e-9) + 1e-12 * start);
    }
  }
}

TEST_CASE("connected_components: examples") {
  SparseMatrix I(2, 2);
  I.insert(0, 0) = 1.0;
  I.insert(1, 1) = 1.0;
  auto c = connected_components(I);
  CHECK(c.count == 2);
  CHECK(c.row_label[0] == c.col_label[0]);
  CHECK(c.row_label[1] == c.col_label[1]);
  CHECK(c.row_label[0] != c.row_label[1]);

  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(4, 5);
  blocks.topLeftCorner(2, 2).setOnes();
  blocks.bottomRightCorner(2, 3).setOnes();
  c = connected_components(blocks.sparseView());
  CHECK(c.count == 2);

  c = connected_components(Eigen::MatrixXd::Ones(3, 4).sparseView());
  CHECK(c.count == 1);

  SparseMatrix empty(2, 3);
  c = connected_components(empty);
  CHECK(c.count == 5);
}

TEST_CASE("connected_components: invariant under row/column permutation") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = uniform_int(rng, 1, 12);
    const int n = uniform_int(rng, 1, 12);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(m, n);
    for (int k = 0; k < m + n - 3; ++k) V(uniform_int(rng, 0, m - 1), uniform_int(rng, 0, n - 1)) = 1.0;
    std::vector<int> pr(m), pc(n);
    std::iota(pr.begin(), pr.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    std::shuffle(pr.begin(), pr.end(), rng);
    std::shuffle(pc.begin(), pc.end(), rng);
    Eigen::MatrixXd W(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) W(pr[i], pc[j]) = V(i, j);
    }
    const auto a = connected_components(V.sparseView());
    const auto b = connected_components(W.sparseView());
    CHECK(a.count == b.count);
    // Same partition: node pairs agree on "same label" in both labelings.
    auto label_a = [&](int k) { return k < m ? a.row_label[k] : a.col_label[k - m]; };
    auto label_b = [&](int k) { return k < m ? b.row_label[pr[k]] : b.col_label[pc[k - m]]; };
    for (int p = 0; p < m + n; ++p) {
      for (int q = 0; q < m + n; ++q) {
        CHECK((label_a(p) == label_a(q)) == (label_b(p) == label_b(q)));
      }
    }
  }
}
