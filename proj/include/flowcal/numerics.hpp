#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <array>
#include <cstdint>
#include <span>

#include "flowcal/error.hpp"

namespace flowcal {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

// Thin SVD: input (n x d) = u_basis * diag(singular_values) * v_basis^T with
// r = min(n, d) columns in each basis and singular values sorted descending.
template <typename Scalar>
struct SvdResult {
  MatrixX<Scalar> u_basis;
  VectorX<Scalar> singular_values;
  MatrixX<Scalar> v_basis;
};

template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() < 1 || m.cols() < 1) throw DomainError("svd: empty matrix");
  if (!m.allFinite()) throw NumericError("non-finite matrix");
  // Two-sided Jacobi converges to working precision (~1e-16 relative), well
  // inside the 1e-12 convergence tolerance we promise.
  Eigen::JacobiSVD<MatrixX<Scalar>, Eigen::ColPivHouseholderQRPreconditioner> solver(
      m.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

/// xoshiro256** 1.0 (Blackman & Vigna), seeded by expanding the 64-bit seed
/// through splitmix64. This pairing is part of the reproducibility contract:
/// every artifact written by the toolkit is a function of this stream.
///
/// Normal deviates use the Box-Muller transform on two uniforms in (0, 1],
/// returning the cosine branch first and caching the sine branch.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Unbiased integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// n x d matrix of i.i.d. standard normals, filled in row-major order.
Matrix gaussian_sample(Rng& rng, Index n, Index d);

// Random orthogonal d x d matrix (QR of a Gaussian matrix, sign-corrected).
Matrix random_orthogonal(Rng& rng, Index d);

}  // namespace flowcal
