#include "flowcal/baselines.hpp"

#include <algorithm>

namespace flowcal {

EmbeddingMatrix apply_baseline(const EmbeddingMatrix& e, Baseline method, Index k) {
  switch (method) {
    case Baseline::sn:
      return {standard_normalize(e.matrix).first, e.source_tag + "+sn"};
    case Baseline::natsv:
      return {natsv(e.matrix, k), e.source_tag + "+natsv" + std::to_string(k)};
    case Baseline::sn_natsv:
      return {sn_natsv(e.matrix, k), e.source_tag + "+sn+natsv" + std::to_string(k)};
  }
  throw DomainError("unknown baseline");
}

KSelection select_natsv_k(const EmbeddingMatrix& e, const PairDataset& validation, bool with_sn,
                          Index k_max) {
  const Index limit = std::min({k_max, e.cols() - 1, e.rows()});
  if (limit < 1) throw DomainError("natsv k sweep needs D >= 2 and k_max >= 1");
  const Matrix base = with_sn ? standard_normalize(e.matrix).first : e.matrix;
  const auto full = natsv_decompose(base, limit);
  const Matrix centered = base.rowwise() - full.mean.transpose();
  const auto gold = validation.gold_scores();

  KSelection sel;
  // Removing directions one at a time reuses the single SVD.
  Matrix residual = centered;
  for (Index k = 1; k <= limit; ++k) {
    const auto v = full.removed.col(k - 1);
    residual -= (residual * v) * v.transpose();
    const double rho = spearman(pair_cosines(residual, validation), gold);
    sel.rho_by_k.push_back(rho);
    if (k == 1 || rho > sel.best_rho) {
      sel.best_k = k;
      sel.best_rho = rho;
    }
  }
  return sel;
}

}  // namespace flowcal
