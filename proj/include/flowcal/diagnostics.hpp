#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowcal/embedding_store.hpp"
#include "flowcal/numerics.hpp"

// Anisotropy probes: frequency-bucketed norms and k-NN statistics, singular
// spectrum, isotropy summaries, and lexical-vs-embedding similarity.

namespace flowcal {

// Half-open rank buckets [1, b0), [b0, b1), ..., plus an overflow bucket
// [b_last, inf). Defaults follow the usual 100 / 500 / 5K / 10K split.
struct BucketSpec {
  std::vector<std::int64_t> boundaries{100, 500, 5000, 10000};

  void validate() const;
  std::size_t bucket_count() const { return boundaries.size() + 1; }
  std::size_t bucket_of(std::int64_t rank) const;
  std::string label(std::size_t bucket) const;
};

struct BucketStat {
  std::string label;
  std::size_t count = 0;
  std::optional<double> mean;  // absent for empty buckets
};

// Mean row l2 norm per bucket.
std::vector<BucketStat> norm_by_bucket(const Matrix& e, const FrequencyTable& f,
                                       const BucketSpec& buckets);

enum class KnnMetric { l2, dot };
// Criterion used to pick the k neighbors whose statistic is reported.
enum class NeighborSelection { l2, dot };

// Per-row mean over the k nearest neighbors (self excluded) of the l2
// distance or the dot product. Neighbor ties break toward the lower index.
std::vector<double> knn_row_means(const Matrix& e, Index k, KnnMetric metric,
                                  NeighborSelection selection = NeighborSelection::l2,
                                  unsigned threads = 1);

std::vector<BucketStat> knn_stats(const Matrix& e, const FrequencyTable& f,
                                  const BucketSpec& buckets, Index k, KnnMetric metric,
                                  NeighborSelection selection = NeighborSelection::l2,
                                  unsigned threads = 1);

// Singular values of the column-centered matrix, descending.
Vector singular_spectrum(const Matrix& e);

// s_min / s_max of the centered spectrum; 1 for perfectly isotropic data.
double spectral_flatness(const Vector& singular_values);

// Mean cosine over all ordered pairs i != j.
double mean_pairwise_cosine(const Matrix& e);

struct KnnRow {
  Index k = 0;
  KnnMetric metric = KnnMetric::l2;
  std::vector<BucketStat> buckets;
};

struct DiagnosticsReport {
  std::vector<BucketStat> norms;
  std::vector<KnnRow> knn;
  Vector singular_values;
  double flatness = 0.0;
  double mean_cosine = 0.0;
};

// Frequency-dependent probes are skipped when `f` is null.
DiagnosticsReport diagnose(const Matrix& e, const FrequencyTable* f, const BucketSpec& buckets,
                           const std::vector<Index>& ks,
                           NeighborSelection selection = NeighborSelection::l2,
                           unsigned threads = 1);

// Human-readable table, one row per statistic and one column per bucket.
std::string format_report(const DiagnosticsReport& report, const BucketSpec& buckets);
// Machine-readable "section<TAB>key<TAB>bucket<TAB>count<TAB>value".
std::string format_report_tsv(const DiagnosticsReport& report);

// Levenshtein distance over Unicode scalar values (UTF-8 input; invalid
// bytes count as one symbol each).
std::size_t edit_distance(std::string_view a, std::string_view b);

inline constexpr std::size_t kLowEditDistance = 4;

struct ScatterRow {
  Index index_a = 0;
  Index index_b = 0;
  double similarity = 0.0;
  std::size_t edit_distance = 0;
  bool low_edit = false;  // edit distance <= kLowEditDistance
};

struct LexicalReport {
  double rho_predicted_edit = 0.0;
  double rho_gold_edit = 0.0;
  double rho_predicted_gold = 0.0;
  std::vector<ScatterRow> scatter;
};

LexicalReport lexical_correlation(const SentenceFile& sentences, const PairDataset& pairs,
                                  const std::vector<double>& predicted);

// "index_a<TAB>index_b<TAB>similarity<TAB>edit_distance<TAB>low_edit_flag"
void write_scatter(const std::filesystem::path& path, const std::vector<ScatterRow>& rows);

}  // namespace flowcal
