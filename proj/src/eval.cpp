#include "flowcal/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"

namespace flowcal {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the mean 1-based rank.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("correlation: length mismatch");
  if (xs.size() < 2) throw DomainError("correlation: need at least two values");
  const auto n = static_cast<Index>(xs.size());
  const Eigen::Map<const Vector> x(xs.data(), n), y(ys.data(), n);
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DomainError("undefined correlation (constant input)");
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("spearman: length mismatch");
  if (xs.size() < 3) throw DomainError("spearman: need at least three values");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DomainError("auc: length mismatch");
  double positives = 0.0, negatives = 0.0, positive_rank_sum = 0.0;
  const auto ranks = average_ranks(scores);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      positives += 1.0;
      positive_rank_sum += ranks[i];
    } else if (labels[i] == 0) {
      negatives += 1.0;
    } else {
      throw DomainError("auc: label " + std::to_string(labels[i]) + " at " + std::to_string(i) +
                        " is not 0 or 1");
    }
  }
  if (positives == 0.0 || negatives == 0.0) throw DomainError("auc: single-class input");
  const double u = positive_rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

std::vector<double> pair_cosines(const Matrix& embeddings, const PairDataset& pairs) {
  pairs.check_indices(embeddings.rows());
  const Vector norms = embeddings.rowwise().norm();
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs.pairs) {
    for (Index r : {p.index_a, p.index_b})
      if (!(norms(r) > 0.0)) throw DomainError("zero-norm embedding at row " + std::to_string(r));
    const double c = embeddings.row(p.index_a).dot(embeddings.row(p.index_b)) /
                     (norms(p.index_a) * norms(p.index_b));
    out.push_back(std::clamp(c, -1.0, 1.0));
  }
  return out;
}

namespace {

std::vector<PairPrediction> dump(const PairDataset& pairs, const std::vector<double>& predicted) {
  std::vector<PairPrediction> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs.pairs[i];
    out.push_back({p.index_a, p.index_b, predicted[i], p.gold});
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

EvalReport evaluate_similarity(const EmbeddingMatrix& e, const PairDataset& pairs,
                               bool keep_pairs) {
  const auto predicted = pair_cosines(e.matrix, pairs);
  const auto gold = pairs.gold_scores();
  EvalReport r{"spearman", spearman(predicted, gold), pairs.size(), {}};
  if (keep_pairs) r.per_pair = dump(pairs, predicted);
  return r;
}

EvalReport evaluate_entailment(const EmbeddingMatrix& e, const PairDataset& pairs,
                               bool keep_pairs) {
  const auto predicted = pair_cosines(e.matrix, pairs);
  std::vector<int> labels;
  labels.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double g = pairs.pairs[i].gold;
    if (g != 0.0 && g != 1.0)
      throw DomainError("pair " + std::to_string(i) + ": entailment gold must be 0 or 1, got " +
                        fmt(g));
    labels.push_back(g == 1.0 ? 1 : 0);
  }
  EvalReport r{"auc", auc(predicted, labels), pairs.size(), {}};
  if (keep_pairs) r.per_pair = dump(pairs, predicted);
  return r;
}

void write_report_tsv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::string text;
  for (const auto& r : reports)
    text += r.metric + '\t' + fmt(r.value) + '\t' + std::to_string(r.n_pairs) + '\n';
  detail::write_all(path, text);
}

void write_pair_dump(const std::filesystem::path& path, const EvalReport& report) {
  std::string text;
  for (const auto& p : report.per_pair)
    text += std::to_string(p.index_a) + '\t' + std::to_string(p.index_b) + '\t' +
            fmt(p.predicted) + '\t' + fmt(p.gold) + '\n';
  detail::write_all(path, text);
}

}  // namespace flowcal
