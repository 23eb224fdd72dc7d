#pragma once

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowcal/embedding_store.hpp"
#include "flowcal/numerics.hpp"

namespace flowcal {

template <typename A, typename B>
typename A::Scalar cosine(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  using Scalar = typename A::Scalar;
  if (u.size() != v.size()) throw DomainError("cosine: dimension mismatch");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > 0) || !(nv > 0)) throw DomainError("zero-norm embedding");
  const Scalar c = u.dot(v) / (nu * nv);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

// 1-based fractional ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of average ranks. Throws DomainError
// ("undefined correlation") if either input is constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Mann-Whitney AUC: P(score of random positive > score of random negative),
// ties counted 1/2. Labels must be 0 or 1 with both present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct PairPrediction {
  Index index_a = 0;
  Index index_b = 0;
  double predicted = 0.0;
  double gold = 0.0;
};

struct EvalReport {
  std::string metric;  // "spearman" or "auc"
  double value = 0.0;
  std::size_t n_pairs = 0;
  std::vector<PairPrediction> per_pair;  // filled when requested
};

// Cosine similarity of each pair's two rows, in pair order.
std::vector<double> pair_cosines(const Matrix& embeddings, const PairDataset& pairs);

// Spearman correlation between pair cosines and gold scores.
EvalReport evaluate_similarity(const EmbeddingMatrix& e, const PairDataset& pairs,
                               bool keep_pairs = false);

// AUC of pair cosines against binary gold labels (1 = entailment).
EvalReport evaluate_entailment(const EmbeddingMatrix& e, const PairDataset& pairs,
                               bool keep_pairs = false);

// "metric<TAB>value<TAB>n_pairs" with raw (unscaled) values.
void write_report_tsv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
// "index_a<TAB>index_b<TAB>predicted<TAB>gold"
void write_pair_dump(const std::filesystem::path& path, const EvalReport& report);

}  // namespace flowcal
