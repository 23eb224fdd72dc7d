#include "flowcal/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "flowcal/eval.hpp"

namespace flowcal {

void BucketSpec::validate() const {
  if (boundaries.empty()) throw DomainError("bucket spec needs at least one boundary");
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    if (boundaries[i] < 2) throw DomainError("bucket boundaries must be > 1");
    if (i > 0 && boundaries[i] <= boundaries[i - 1])
      throw DomainError("bucket boundaries must be strictly ascending");
  }
}

std::size_t BucketSpec::bucket_of(std::int64_t rank) const {
  return static_cast<std::size_t>(
      std::upper_bound(boundaries.begin(), boundaries.end(), rank) - boundaries.begin());
}

std::string BucketSpec::label(std::size_t bucket) const {
  const auto lo = bucket == 0 ? std::int64_t{1} : boundaries[bucket - 1];
  if (bucket >= boundaries.size()) return "[" + std::to_string(lo) + ",inf)";
  return "[" + std::to_string(lo) + "," + std::to_string(boundaries[bucket]) + ")";
}

namespace {

std::vector<BucketStat> bucket_means(const std::vector<double>& values, const FrequencyTable& f,
                                     const BucketSpec& buckets) {
  buckets.validate();
  if (values.size() != f.ranks.size())
    throw DomainError("frequency table has " + std::to_string(f.ranks.size()) +
                      " ranks for " + std::to_string(values.size()) + " rows");
  std::vector<double> sums(buckets.bucket_count(), 0.0);
  std::vector<BucketStat> out(buckets.bucket_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (f.ranks[i] < 1) throw DomainError("ranks must be >= 1");
    const auto b = buckets.bucket_of(f.ranks[i]);
    sums[b] += values[i];
    ++out[b].count;
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].label = buckets.label(b);
    if (out[b].count > 0) out[b].mean = sums[b] / static_cast<double>(out[b].count);
  }
  return out;
}

template <typename RowFn>
void for_rows(Index n, unsigned threads, RowFn&& fn) {
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(n, 1));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const Index chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (Index w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (Index i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
    bool ok = len > 0 && i + len <= s.size();
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1f) : len == 3 ? (c & 0x0f) : (c & 0x07);
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      ok = (cc & 0xc0) == 0x80;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if (!ok) {
      // Keep invalid bytes distinct from every valid scalar value.
      out.push_back(0x110000u + c);
      ++i;
    } else {
      out.push_back(cp);
      i += len;
    }
  }
  return out;
}

}  // namespace

std::vector<BucketStat> norm_by_bucket(const Matrix& e, const FrequencyTable& f,
                                       const BucketSpec& buckets) {
  const Vector norms = e.rowwise().norm();
  return bucket_means(std::vector<double>(norms.data(), norms.data() + norms.size()), f, buckets);
}

std::vector<double> knn_row_means(const Matrix& e, Index k, KnnMetric metric,
                                  NeighborSelection selection, unsigned threads) {
  const Index n = e.rows();
  if (k < 1 || k >= n)
    throw DomainError("knn: k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
                      std::to_string(n));
  // Row-major copy keeps each neighbor scan contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = e;
  std::vector<double> out(static_cast<std::size_t>(n));
  for_rows(n, threads, [&](Index i) {
    std::vector<std::pair<double, Index>> keyed;
    keyed.reserve(static_cast<std::size_t>(n - 1));
    std::vector<double> sq(static_cast<std::size_t>(n)), dots(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sq[j] = (rows.row(i) - rows.row(j)).squaredNorm();
      dots[j] = rows.row(i).dot(rows.row(j));
      keyed.emplace_back(selection == NeighborSelection::l2 ? sq[j] : -dots[j], j);
    }
    std::partial_sort(keyed.begin(), keyed.begin() + k, keyed.end());
    double sum = 0.0;
    for (Index t = 0; t < k; ++t) {
      const Index j = keyed[static_cast<std::size_t>(t)].second;
      sum += metric == KnnMetric::l2 ? std::sqrt(sq[j]) : dots[j];
    }
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(k);
  });
  return out;
}

std::vector<BucketStat> knn_stats(const Matrix& e, const FrequencyTable& f,
                                  const BucketSpec& buckets, Index k, KnnMetric metric,
                                  NeighborSelection selection, unsigned threads) {
  if (static_cast<Index>(f.ranks.size()) != e.rows())
    throw DomainError("frequency table length does not match embedding rows");
  return bucket_means(knn_row_means(e, k, metric, selection, threads), f, buckets);
}

Vector singular_spectrum(const Matrix& e) {
  if (e.rows() < 2) throw DomainError("singular spectrum needs at least two rows");
  const Matrix centered = e.rowwise() - e.colwise().mean();
  return svd(centered).singular_values;
}

double spectral_flatness(const Vector& s) {
  if (s.size() == 0 || !(s(0) > 0.0)) throw DomainError("spectral flatness of a zero spectrum");
  return s(s.size() - 1) / s(0);
}

double mean_pairwise_cosine(const Matrix& e) {
  const Index n = e.rows();
  if (n < 2) throw DomainError("mean pairwise cosine needs at least two rows");
  const Vector norms = e.rowwise().norm();
  for (Index i = 0; i < n; ++i)
    if (!(norms(i) > 0.0)) throw DomainError("zero-norm embedding at row " + std::to_string(i));
  const Matrix unit = norms.cwiseInverse().asDiagonal() * e;
  // sum_{i != j} <a_i, a_j> = ||sum_i a_i||^2 - n for unit rows.
  const double total = unit.colwise().sum().squaredNorm() - static_cast<double>(n);
  return total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

DiagnosticsReport diagnose(const Matrix& e, const FrequencyTable* f, const BucketSpec& buckets,
                           const std::vector<Index>& ks, NeighborSelection selection,
                           unsigned threads) {
  DiagnosticsReport r;
  if (f) {
    r.norms = norm_by_bucket(e, *f, buckets);
    for (auto metric : {KnnMetric::l2, KnnMetric::dot})
      for (Index k : ks)
        r.knn.push_back({k, metric, knn_stats(e, *f, buckets, k, metric, selection, threads)});
  }
  r.singular_values = singular_spectrum(e);
  r.flatness = spectral_flatness(r.singular_values);
  r.mean_cosine = mean_pairwise_cosine(e);
  return r;
}

std::string format_report(const DiagnosticsReport& r, const BucketSpec& buckets) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  auto row = [&](const std::string& name, const std::vector<BucketStat>& stats) {
    out << name;
    for (const auto& s : stats) {
      out << '\t';
      if (s.mean)
        out << *s.mean;
      else
        out << '-';
    }
    out << '\n';
  };
  if (!r.norms.empty()) {
    out << "rank range";
    for (std::size_t b = 0; b < buckets.bucket_count(); ++b) out << '\t' << buckets.label(b);
    out << "\ncount";
    for (const auto& s : r.norms) out << '\t' << s.count;
    out << '\n';
    row("mean l2-norm", r.norms);
    for (const auto& k : r.knn)
      row(std::string(k.metric == KnnMetric::l2 ? "mean k-NN l2-dist" : "mean k-NN dot") +
              " (k=" + std::to_string(k.k) + ")",
          k.buckets);
  }
  out << "spectral flatness (s_min/s_max)\t" << r.flatness << '\n';
  out << "mean pairwise cosine\t" << r.mean_cosine << '\n';
  out << "singular values";
  for (Index i = 0; i < r.singular_values.size(); ++i) out << '\t' << r.singular_values(i);
  out << '\n';
  return out.str();
}

std::string format_report_tsv(const DiagnosticsReport& r) {
  std::string out;
  auto rows = [&](const std::string& section, const std::string& key,
                  const std::vector<BucketStat>& stats) {
    for (const auto& s : stats)
      out += section + '\t' + key + '\t' + s.label + '\t' + std::to_string(s.count) + '\t' +
             (s.mean ? fmt(*s.mean) : std::string("nan")) + '\n';
  };
  rows("norm", "l2", r.norms);
  for (const auto& k : r.knn)
    rows(k.metric == KnnMetric::l2 ? "knn_l2" : "knn_dot", "k=" + std::to_string(k.k), k.buckets);
  out += "isotropy\tflatness\tall\t" + std::to_string(r.singular_values.size()) + '\t' +
         fmt(r.flatness) + '\n';
  out += "isotropy\tmean_cosine\tall\t0\t" + fmt(r.mean_cosine) + '\n';
  for (Index i = 0; i < r.singular_values.size(); ++i)
    out += "spectrum\ts" + std::to_string(i) + "\tall\t1\t" + fmt(r.singular_values(i)) + '\n';
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto s = decode_utf8(a);
  const auto t = decode_utf8(b);
  std::vector<std::size_t> prev(t.size() + 1), cur(t.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[t.size()];
}

LexicalReport lexical_correlation(const SentenceFile& sentences, const PairDataset& pairs,
                                  const std::vector<double>& predicted) {
  if (predicted.size() != pairs.size())
    throw DomainError("lexical: " + std::to_string(predicted.size()) + " predictions for " +
                      std::to_string(pairs.size()) + " pairs");
  pairs.check_indices(static_cast<Index>(sentences.sentences.size()));
  LexicalReport r;
  std::vector<double> edits;
  edits.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs.pairs[i];
    const auto d = edit_distance(sentences.sentences[p.index_a], sentences.sentences[p.index_b]);
    edits.push_back(static_cast<double>(d));
    r.scatter.push_back({p.index_a, p.index_b, predicted[i], d, d <= kLowEditDistance});
  }
  const auto gold = pairs.gold_scores();
  r.rho_predicted_edit = spearman(predicted, edits);
  r.rho_gold_edit = spearman(gold, edits);
  r.rho_predicted_gold = spearman(predicted, gold);
  return r;
}

void write_scatter(const std::filesystem::path& path, const std::vector<ScatterRow>& rows) {
  std::string text;
  for (const auto& r : rows)
    text += std::to_string(r.index_a) + '\t' + std::to_string(r.index_b) + '\t' +
            fmt(r.similarity) + '\t' + std::to_string(r.edit_distance) + '\t' +
            (r.low_edit ? "1" : "0") + '\n';
  detail::write_all(path, text);
}

}  // namespace flowcal
