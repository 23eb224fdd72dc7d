#include <doctest.h>

#include "oracles.hpp"

using namespace flowcal;

namespace {

AdditiveCoupling random_coupling(Index dim, CouplingKind kind, std::uint64_t seed) {
  Rng rng(seed);
  AdditiveCoupling c{dim / 2, CouplingNet::make(kind, dim / 2, dim - dim / 2, 8, rng)};
  // Give the zero-initialized readout some weight.
  c.net.w3 = oracle::random_matrix(seed + 100, c.net.w3.rows(), c.net.w3.cols(), 0.5);
  c.net.b3 = oracle::random_matrix(seed + 200, c.net.b3.size(), 1, 0.5).col(0);
  return c;
}

}  // namespace

TEST_CASE("coupling with a stub shift network") {
  const auto stub = [](const Vector& a) {
    Vector out(2);
    out << a(0) + a(1), a(0) - a(1);
    return out;
  };
  Vector x(4);
  x << 1, 2, 3, 4;
  const Vector y = coupling_forward(x, 2, stub);
  Vector expected(4);
  expected << 1, 2, 6, 3;
  CHECK(y == expected);
  CHECK(coupling_inverse(y, 2, stub) == x);
}

TEST_CASE("zero-initialized coupling is the identity") {
  for (auto kind : {CouplingKind::dense, CouplingKind::conv1d}) {
    Rng rng(3);
    const AdditiveCoupling c{3, CouplingNet::make(kind, 3, 4, 32, rng)};
    const Matrix xs = oracle::random_matrix(9, 20, 7);
    for (Index i = 0; i < xs.rows(); ++i) {
      const Vector x = xs.row(i).transpose();
      CHECK(coupling_forward(x, c) == x);
      CHECK(coupling_inverse(x, c) == x);
    }
  }
}

TEST_CASE("coupling inverse is exact on random vectors") {
  for (auto kind : {CouplingKind::dense, CouplingKind::conv1d}) {
    for (Index dim : {2, 5, 8}) {
      const auto c = random_coupling(dim, kind, 40 + static_cast<std::uint64_t>(dim));
      const Matrix xs = oracle::random_matrix(77, 1000, dim, 2.0);
      double worst = 0;
      for (Index i = 0; i < xs.rows(); ++i) {
        const Vector x = xs.row(i).transpose();
        worst = std::max(worst, (coupling_inverse(coupling_forward(x, c), c) - x).cwiseAbs().maxCoeff());
        worst = std::max(worst, (coupling_forward(coupling_inverse(x, c), c) - x).cwiseAbs().maxCoeff());
      }
      CHECK(worst < 1e-12);
      // The conditioning half passes through untouched.
      const Vector x = xs.row(0).transpose();
      CHECK(coupling_forward(x, c).head(dim / 2) == x.head(dim / 2));
    }
  }
  const auto c = random_coupling(4, CouplingKind::dense, 1);
  CHECK_THROWS_AS(coupling_forward(Vector::Ones(5), c), DomainError);
  CHECK_THROWS_AS(coupling_inverse(Vector::Ones(3), c), DomainError);
}

TEST_CASE("actnorm apply") {
  const auto id = ActNorm::identity(3);
  Vector x(3);
  x << 0.5, -2, 7;
  auto [y, ld] = actnorm_apply(x, id, Direction::forward);
  CHECK(y == x);
  CHECK(ld == 0.0);

  ActNorm two{Vector::Constant(2, 2.0), Vector::Zero(2), true};
  CHECK(actnorm_apply(Vector::Ones(2), two, Direction::forward).second ==
        doctest::Approx(1.386294361119890).epsilon(1e-14));
  CHECK(actnorm_apply(Vector::Ones(2), two, Direction::inverse).second ==
        doctest::Approx(-1.386294361119890).epsilon(1e-14));

  ActNorm a{Vector::Zero(3), Vector::Zero(3), true};
  a.scale << 0.3, -1.7, 4.0;
  a.bias << 1, 2, -3;
  const Matrix xs = oracle::random_matrix(5, 1000, 3, 3.0);
  double worst = 0;
  for (Index i = 0; i < xs.rows(); ++i) {
    const Vector v = xs.row(i).transpose();
    const auto [fwd, lf] = actnorm_apply(v, a, Direction::forward);
    const auto [back, lb] = actnorm_apply(fwd, a, Direction::inverse);
    worst = std::max(worst, (back - v).cwiseAbs().maxCoeff());
    CHECK(lf == -lb);
  }
  CHECK(worst < 1e-12);

  ActNorm uninit{Vector::Ones(2), Vector::Zero(2), false};
  CHECK_THROWS_AS(actnorm_apply(Vector::Ones(2), uninit, Direction::forward), DomainError);
  ActNorm zero{Vector::Zero(2), Vector::Zero(2), true};
  CHECK_THROWS_AS(actnorm_apply(Vector::Ones(2), zero, Direction::forward), DomainError);
}

TEST_CASE("actnorm data-dependent init") {
  Matrix batch(2, 1);
  batch << 0, 2;
  ActNorm a;
  actnorm_init(batch, a);
  CHECK(a.initialized);
  CHECK(actnorm_apply(Vector::Constant(1, 0.0), a, Direction::forward).first(0) == doctest::Approx(-1.0));
  CHECK(actnorm_apply(Vector::Constant(1, 2.0), a, Direction::forward).first(0) == doctest::Approx(1.0));

  const Matrix data = oracle::random_matrix(8, 300, 5, 4.0).array() + 3.0;
  ActNorm b;
  actnorm_init(data, b);
  Matrix out(data.rows(), data.cols());
  for (Index i = 0; i < data.rows(); ++i)
    out.row(i) = actnorm_apply(data.row(i).transpose(), b, Direction::forward).first.transpose();
  const Vector mean = out.colwise().mean().transpose();
  const Vector var = (out.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-8);

  // Fixed point: standardized data leaves s = 1, t = 0.
  ActNorm c;
  actnorm_init(out, c);
  CHECK((c.scale.array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK(c.bias.cwiseAbs().maxCoeff() < 1e-10);

  Matrix constant = oracle::random_matrix(2, 10, 3);
  constant.col(1).setConstant(4.0);
  ActNorm d;
  CHECK_THROWS_WITH_AS(actnorm_init(constant, d), doctest::Contains("degenerate dimension"),
                       DomainError);
  CHECK_THROWS_AS(actnorm_init(Matrix::Ones(1, 3), d), DomainError);
}

TEST_CASE("permutation") {
  Rng rng(4);
  const auto p = Permutation::random(9, rng);
  Vector x = Vector::LinSpaced(9, 0, 8);
  CHECK(permute(permute(x, p, Direction::forward), p, Direction::inverse) == x);
  const Vector y = permute(x, p, Direction::forward);
  for (Index i = 0; i < 9; ++i) CHECK(y(i) == x(p.perm[i]));
  CHECK_THROWS_AS(Permutation::from({0, 0, 1}), DomainError);
  CHECK_THROWS_AS(Permutation::from({0, 3}), DomainError);
}
