#include <doctest.h>

#include <limits>

#include "oracles.hpp"

using namespace flowcal;

namespace {

void check_svd(const Matrix& m, double recon_tol) {
  const auto r = svd(m);
  const Index k = std::min(m.rows(), m.cols());
  REQUIRE(r.u_basis.cols() == k);
  REQUIRE(r.v_basis.cols() == k);
  REQUIRE(r.singular_values.size() == k);
  for (Index i = 0; i < k; ++i) {
    CHECK(r.singular_values(i) >= 0.0);
    if (i > 0) CHECK(r.singular_values(i) <= r.singular_values(i - 1));
  }
  CHECK((r.u_basis.transpose() * r.u_basis - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((r.v_basis.transpose() * r.v_basis - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
  const Matrix recon = r.u_basis * r.singular_values.asDiagonal() * r.v_basis.transpose();
  CHECK((recon - m).norm() <= recon_tol * m.norm());
}

}  // namespace

TEST_CASE("svd of closed-form matrices") {
  const auto id = svd(Matrix::Identity(3, 3));
  CHECK(id.singular_values.isApprox(Vector::Ones(3)));

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  const auto r = svd(d);
  CHECK(r.singular_values(0) == doctest::Approx(3.0));
  CHECK(r.singular_values(1) == doctest::Approx(1.0));

  // Order is descending regardless of where the large value sits.
  Matrix d2 = Matrix::Zero(2, 2);
  d2(0, 0) = 1;
  d2(1, 1) = 3;
  CHECK(svd(d2).singular_values(0) == doctest::Approx(3.0));
}

TEST_CASE("svd reconstructs random matrices") {
  Rng rng(7);
  const Matrix m = gaussian_sample(rng, 5, 3);
  const auto r = svd(m);
  const Matrix recon = r.u_basis * r.singular_values.asDiagonal() * r.v_basis.transpose();
  CHECK((recon - m).norm() < 1e-10);

  check_svd(m, 1e-8);
  check_svd(m.transpose(), 1e-8);
  check_svd(oracle::random_matrix(1, 512, 128), 1e-8);
  check_svd(oracle::random_matrix(2, 40, 40, 1e3), 1e-8);
  // Rank-deficient input keeps orthonormal bases.
  const Matrix a = oracle::random_matrix(3, 30, 1);
  check_svd(a * oracle::random_matrix(4, 1, 6), 1e-8);
}

TEST_CASE("svd rejects non-finite input") {
  Matrix m = Matrix::Ones(3, 3);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(svd(m), "non-finite matrix", NumericError);
  m(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(svd(m), NumericError);
}

TEST_CASE("rng matches the reference xoshiro256** stream") {
  // Computed by an independent implementation of splitmix64 + xoshiro256**.
  Rng zero(0);
  CHECK(zero.next_u64() == 0x99ec5f36cb75f2b4ULL);
  CHECK(zero.next_u64() == 0xbf6e1f784956452aULL);
  CHECK(zero.next_u64() == 0x1a5f849d4933e6e0ULL);
  CHECK(zero.next_u64() == 0x6aa594f1262d2d2cULL);
  Rng r42(42);
  CHECK(r42.next_u64() == 0x15780b2e0c2ec716ULL);
  CHECK(r42.next_u64() == 0x6104d9866d113a7eULL);

  // Box-Muller on the first two uniforms of seed 42.
  Rng n42(42);
  CHECK(n42.normal() == doctest::Approx(-0.303263064678738).epsilon(1e-14));
  CHECK(n42.normal() == doctest::Approx(0.28846173882942383).epsilon(1e-14));
}

TEST_CASE("gaussian_sample is deterministic and seed sensitive") {
  Rng a(42), b(42);
  CHECK(gaussian_sample(a, 1, 4) == gaussian_sample(b, 1, 4));
  Rng c(1), d(2);
  CHECK(gaussian_sample(c, 1, 4) != gaussian_sample(d, 1, 4));
  Rng e(3);
  CHECK_THROWS_AS(gaussian_sample(e, 0, 4), DomainError);
}

TEST_CASE("gaussian_sample moments") {
  Rng rng(42);
  const Matrix s = gaussian_sample(rng, 10000, 1);
  const double mean = s.mean();
  const double var = (s.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.05);
  CHECK(var > 0.9);
  CHECK(var < 1.1);
}

TEST_CASE("rng helpers") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(std::span(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

  const Matrix q = random_orthogonal(rng, 6);
  CHECK((q.transpose() * q - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
}
