#include "flowcal/embedding_store.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace flowcal {

namespace fs = std::filesystem;
using detail::get_le;
using detail::put_le;
using detail::read_all;
using detail::write_all;

void EmbeddingMatrix::validate() const {
  if (matrix.rows() < 1) throw DomainError("embedding matrix needs at least one row");
  if (matrix.cols() < 2) throw DomainError("embedding matrix needs at least two columns");
  for (Index i = 0; i < matrix.rows(); ++i)
    if (!matrix.row(i).allFinite())
      throw DomainError("embedding row " + std::to_string(i) + " is not finite");
}

std::vector<double> PairDataset::gold_scores() const {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.gold);
  return out;
}

void PairDataset::check_indices(Index n_rows) const {
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    if (p.index_a < 0 || p.index_b < 0 || p.index_a >= n_rows || p.index_b >= n_rows)
      throw DomainError("pair " + std::to_string(k) + " (" + std::to_string(p.index_a) + ", " +
                        std::to_string(p.index_b) + ") is out of range for " +
                        std::to_string(n_rows) + " embeddings");
  }
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool skippable(const std::string& line) {
  return line.empty() || line.front() == '#';
}

template <typename T>
bool parse_number(std::string_view field, T& value) {
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

EmbeddingMatrix load_embeddings(const fs::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 4 || bytes.compare(0, 4, "EMBD") != 0)
    throw FormatError(path.string() + ": format error: bad magic");
  if (bytes.size() < kEmbdHeaderBytes)
    throw CorruptFileError(path.string() + ": corrupt file: truncated header");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kEmbdVersion)
    throw FormatError(path.string() + ": format error: unsupported version " +
                      std::to_string(version));
  const auto rows = get_le<std::uint64_t>(bytes, 8);
  const auto cols = get_le<std::uint64_t>(bytes, 16);

  constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  if (rows != 0 && cols > kMax / 4 / rows)
    throw CorruptFileError(path.string() + ": corrupt file: dimension overflow");
  const std::uint64_t payload = rows * cols * 4;
  if (bytes.size() - kEmbdHeaderBytes < payload + 4)
    throw CorruptFileError(path.string() + ": corrupt file: payload truncated at offset " +
                           std::to_string(bytes.size()));

  EmbeddingMatrix e;
  e.matrix.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t offset = kEmbdHeaderBytes;
  for (std::uint64_t i = 0; i < rows; ++i)
    for (std::uint64_t j = 0; j < cols; ++j, offset += 4)
      e.matrix(static_cast<Index>(i), static_cast<Index>(j)) =
          std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));

  const auto tag_len = get_le<std::uint32_t>(bytes, offset);
  offset += 4;
  if (bytes.size() - offset != tag_len)
    throw CorruptFileError(path.string() + ": corrupt file: source tag length " +
                           std::to_string(tag_len) + " does not match " +
                           std::to_string(bytes.size() - offset) + " trailing bytes");
  e.source_tag = bytes.substr(offset);
  try {
    e.validate();
  } catch (const DomainError& err) {
    throw CorruptFileError(path.string() + ": corrupt file: " + err.what());
  }
  return e;
}

void save_embeddings(const fs::path& path, const EmbeddingMatrix& e) {
  e.validate();
  std::string bytes = "EMBD";
  bytes.reserve(kEmbdHeaderBytes + 4 * static_cast<std::size_t>(e.matrix.size()) + 4 +
                e.source_tag.size());
  put_le<std::uint32_t>(bytes, kEmbdVersion);
  put_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(e.rows()));
  put_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(e.cols()));
  for (Index i = 0; i < e.rows(); ++i)
    for (Index j = 0; j < e.cols(); ++j) {
      const auto f = static_cast<float>(e.matrix(i, j));
      if (!std::isfinite(f))
        throw DomainError("value at (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") overflows 32-bit storage");
      put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(f));
    }
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(e.source_tag.size()));
  bytes += e.source_tag;
  write_all(path, bytes);
}

PairDataset load_pairs(const fs::path& path) {
  const auto lines = read_lines(path);
  PairDataset out;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (skippable(lines[n])) continue;
    const auto fields = split_tabs(lines[n]);
    if (fields.size() != 3)
      throw ParseError(path.string(), n + 1,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    SentencePair p;
    std::int64_t a = 0, b = 0;
    if (!parse_number(fields[0], a) || a < 0)
      throw ParseError(path.string(), n + 1, "bad index_a '" + std::string(fields[0]) + "'");
    if (!parse_number(fields[1], b) || b < 0)
      throw ParseError(path.string(), n + 1, "bad index_b '" + std::string(fields[1]) + "'");
    if (!parse_number(fields[2], p.gold) || !std::isfinite(p.gold))
      throw ParseError(path.string(), n + 1, "bad gold score '" + std::string(fields[2]) + "'");
    p.index_a = a;
    p.index_b = b;
    out.pairs.push_back(p);
  }
  return out;
}

void save_pairs(const fs::path& path, const PairDataset& pairs) {
  std::string text;
  for (const auto& p : pairs.pairs)
    text += std::to_string(p.index_a) + '\t' + std::to_string(p.index_b) + '\t' +
            format_double(p.gold) + '\n';
  write_all(path, text);
}

FrequencyTable load_frequency(const fs::path& path) {
  const auto lines = read_lines(path);
  FrequencyTable out;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (skippable(lines[n])) continue;
    std::int64_t rank = 0;
    if (!parse_number(std::string_view(lines[n]), rank))
      throw ParseError(path.string(), n + 1, "bad rank '" + lines[n] + "'");
    if (rank < 1) throw ParseError(path.string(), n + 1, "ranks >= 1 required, got " + lines[n]);
    out.ranks.push_back(rank);
  }
  return out;
}

void save_frequency(const fs::path& path, const FrequencyTable& table) {
  std::string text;
  for (auto r : table.ranks) text += std::to_string(r) + '\n';
  write_all(path, text);
}

SentenceFile load_sentences(const fs::path& path) {
  return {read_lines(path)};
}

void save_sentences(const fs::path& path, const SentenceFile& sentences) {
  std::string text;
  for (const auto& s : sentences.sentences) {
    if (s.find('\n') != std::string::npos)
      throw DomainError("sentence contains a newline: " + s);
    text += s + '\n';
  }
  write_all(path, text);
}

}  // namespace flowcal
