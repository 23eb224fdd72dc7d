#pragma once

#include <utility>

#include "flowcal/embedding_store.hpp"
#include "flowcal/eval.hpp"
#include "flowcal/numerics.hpp"

// Post-processing baselines: standard normalization (SN), nulling away the
// top-k singular vectors (NATSV), and SN followed by NATSV.

namespace flowcal {

// Per-dimension mean and population standard deviation.
template <typename Scalar>
struct SnParams {
  VectorX<Scalar> mean;
  VectorX<Scalar> std;
};

template <typename Derived>
SnParams<typename Derived::Scalar> sn_params(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 2) throw DomainError("standard normalization needs at least two rows");
  SnParams<Scalar> p;
  p.mean = x.colwise().mean().transpose();
  p.std = (x.rowwise() - p.mean.transpose()).array().square().colwise().mean().sqrt().transpose();
  for (Index j = 0; j < p.std.size(); ++j)
    if (!(p.std(j) > Scalar(0)))
      throw DomainError("degenerate dimension " + std::to_string(j) + " (zero variance)");
  return p;
}

template <typename Derived>
std::pair<MatrixX<typename Derived::Scalar>, SnParams<typename Derived::Scalar>>
standard_normalize(const Eigen::MatrixBase<Derived>& x) {
  auto p = sn_params(x);
  MatrixX<typename Derived::Scalar> out =
      ((x.rowwise() - p.mean.transpose()).array().rowwise() / p.std.transpose().array()).matrix();
  return {std::move(out), std::move(p)};
}

// u' = (u - mean) - sum_{j<k} <u - mean, v_j> v_j, where v_j are the top-k
// right singular vectors of the centered matrix.
template <typename Scalar>
struct NatsvResult {
  MatrixX<Scalar> output;
  VectorX<Scalar> mean;
  MatrixX<Scalar> removed;  // D x k, orthonormal columns
};

template <typename Derived>
NatsvResult<typename Derived::Scalar> natsv_decompose(const Eigen::MatrixBase<Derived>& x,
                                                      Index k) {
  using Scalar = typename Derived::Scalar;
  if (k < 0 || k >= x.cols())
    throw DomainError("natsv: k = " + std::to_string(k) + " must satisfy 0 <= k < D = " +
                      std::to_string(x.cols()));
  NatsvResult<Scalar> r;
  r.mean = x.colwise().mean().transpose();
  MatrixX<Scalar> centered = x.rowwise() - r.mean.transpose();
  if (k == 0) {
    r.removed.resize(x.cols(), 0);
    r.output = std::move(centered);
    return r;
  }
  if (k > std::min(x.rows(), x.cols()))
    throw DomainError("natsv: k exceeds the rank bound min(N, D)");
  r.removed = svd(centered).v_basis.leftCols(k);
  r.output = centered - (centered * r.removed) * r.removed.transpose();
  return r;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> natsv(const Eigen::MatrixBase<Derived>& x, Index k) {
  return natsv_decompose(x, k).output;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> sn_natsv(const Eigen::MatrixBase<Derived>& x, Index k) {
  if (k < 0 || k >= x.cols()) throw DomainError("natsv: k must satisfy 0 <= k < D");
  return natsv(standard_normalize(x).first, k);
}

enum class Baseline { sn, natsv, sn_natsv };

EmbeddingMatrix apply_baseline(const EmbeddingMatrix& e, Baseline method, Index k);

struct KSelection {
  Index best_k = 0;
  double best_rho = 0.0;
  std::vector<double> rho_by_k;  // entry i is k = i + 1
};

// Picks k in [1, k_max] (clamped below D) maximizing Spearman on `validation`.
// Ties keep the smallest k.
KSelection select_natsv_k(const EmbeddingMatrix& e, const PairDataset& validation, bool with_sn,
                          Index k_max = 20);

}  // namespace flowcal
