#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowcal/numerics.hpp"

namespace flowcal {

// N x D sentence embeddings, one sentence per row.
struct EmbeddingMatrix {
  Matrix matrix;
  std::string source_tag;

  Index rows() const { return matrix.rows(); }
  Index cols() const { return matrix.cols(); }

  // Throws DomainError unless N >= 1, D >= 2 and every entry is finite.
  void validate() const;
};

struct SentencePair {
  Index index_a = 0;
  Index index_b = 0;
  double gold = 0.0;
};

struct PairDataset {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  std::vector<double> gold_scores() const;
  // Throws DomainError naming the first pair whose index is >= n_rows.
  void check_indices(Index n_rows) const;
};

// Row-aligned frequency ranks, 1 = most frequent.
struct FrequencyTable {
  std::vector<std::int64_t> ranks;
};

struct SentenceFile {
  std::vector<std::string> sentences;
};

// EMBD container, little-endian throughout:
//
//   offset  size  field
//   0       4     magic "EMBD"
//   4       4     u32 format version (= kEmbdVersion)
//   8       8     u64 rows
//   16      8     u64 cols
//   24      4*R*C f32 values, row-major
//   ...     4     u32 source_tag byte length
//   ...     L     source_tag, UTF-8
//
// Values are held as double in memory and narrowed to float on save.
inline constexpr std::uint32_t kEmbdVersion = 1;
inline constexpr std::size_t kEmbdHeaderBytes = 24;

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& e);

// TSV "index_a<TAB>index_b<TAB>gold"; '#' lines and blank lines are skipped.
PairDataset load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const PairDataset& pairs);

// One positive integer rank per line.
FrequencyTable load_frequency(const std::filesystem::path& path);
void save_frequency(const std::filesystem::path& path, const FrequencyTable& table);

// One UTF-8 sentence per line; every line is a sentence, including empty ones.
SentenceFile load_sentences(const std::filesystem::path& path);
void save_sentences(const std::filesystem::path& path, const SentenceFile& sentences);

}  // namespace flowcal
