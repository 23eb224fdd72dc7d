#include <doctest.h>

#include <fstream>

#include "oracles.hpp"

using namespace flowcal;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("EMBD round trip is exact at float precision") {
  const auto dir = oracle::scratch("embd_roundtrip");
  Rng rng(11);
  EmbeddingMatrix e{gaussian_sample(rng, 3, 4), "last2avg"};
  // Narrow to float first so the round trip must be bit-identical.
  e.matrix = e.matrix.cast<float>().cast<double>();
  save_embeddings(dir / "a.embd", e);
  const auto back = load_embeddings(dir / "a.embd");
  CHECK(back.matrix == e.matrix);
  CHECK(back.source_tag == "last2avg");

  // Property: any matrix round-trips to its float-narrowed self.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index rows = 1 + static_cast<Index>(seed % 7), cols = 2 + static_cast<Index>(seed % 5);
    EmbeddingMatrix m{oracle::random_matrix(seed, rows, cols, 10.0), std::string(seed, 'x')};
    save_embeddings(dir / "p.embd", m);
    const auto r = load_embeddings(dir / "p.embd");
    CHECK(r.matrix == m.matrix.cast<float>().cast<double>());
    CHECK(r.source_tag == m.source_tag);
  }
}

TEST_CASE("EMBD layout") {
  const auto dir = oracle::scratch("embd_layout");
  Matrix m(1, 2);
  m << 0, 1;
  save_embeddings(dir / "small.embd", {m, ""});
  const auto bytes = read_bytes(dir / "small.embd");
  // header + 2 floats + empty tag length
  CHECK(bytes.size() == kEmbdHeaderBytes + 8 + 4);
  CHECK(bytes.substr(0, 4) == "EMBD");
  CHECK(bytes[4] == 1);                  // version, little endian
  CHECK(bytes[8] == 1);                  // rows
  CHECK(bytes[16] == 2);                 // cols
  CHECK(bytes.substr(24, 4) == std::string("\0\0\0\0", 4));  // 0.0f
  CHECK(bytes.substr(28, 4) == std::string("\0\0\x80\x3f", 4));  // 1.0f

  // Overwrite with new content.
  Matrix m2(2, 2);
  m2 << 1, 2, 3, 4;
  save_embeddings(dir / "small.embd", {m2, "t"});
  CHECK(load_embeddings(dir / "small.embd").matrix == m2);
}

TEST_CASE("EMBD error paths") {
  const auto dir = oracle::scratch("embd_errors");
  write_text(dir / "bad.embd", "XXXX" + std::string(40, '\0'));
  CHECK_THROWS_AS(load_embeddings(dir / "bad.embd"), FormatError);

  // Header says 10 x 768, payload holds 9 rows.
  Rng rng(1);
  save_embeddings(dir / "full.embd", {gaussian_sample(rng, 10, 768), ""});
  auto bytes = read_bytes(dir / "full.embd");
  write_text(dir / "short.embd", bytes.substr(0, kEmbdHeaderBytes + 9 * 768 * 4));
  CHECK_THROWS_AS(load_embeddings(dir / "short.embd"), CorruptFileError);

  // Dimension overflow.
  std::string huge = bytes.substr(0, kEmbdHeaderBytes);
  for (int i = 8; i < 24; ++i) huge[i] = '\xff';
  write_text(dir / "huge.embd", huge + std::string(8, '\0'));
  CHECK_THROWS_AS(load_embeddings(dir / "huge.embd"), CorruptFileError);

  // Trailing garbage after the tag.
  write_text(dir / "trailing.embd", bytes + "zz");
  CHECK_THROWS_AS(load_embeddings(dir / "trailing.embd"), CorruptFileError);

  CHECK_THROWS_AS(load_embeddings(dir / "missing.embd"), IoError);
  CHECK_THROWS_AS(save_embeddings(dir / "no/such/dir/x.embd", {Matrix::Ones(2, 2), ""}), IoError);

  // Invalid matrices are rejected before writing.
  CHECK_THROWS_AS(save_embeddings(dir / "one_col.embd", {Matrix::Ones(3, 1), ""}), DomainError);
  Matrix inf = Matrix::Ones(2, 2);
  inf(0, 0) = 1e300;  // overflows float
  CHECK_THROWS_AS(save_embeddings(dir / "inf.embd", {inf, ""}), DomainError);
}

TEST_CASE("pairs TSV") {
  const auto dir = oracle::scratch("pairs");
  write_text(dir / "p.tsv", "# comment\n0\t1\t4.5\n\n2\t3\t0\n");
  const auto p = load_pairs(dir / "p.tsv");
  REQUIRE(p.size() == 2);
  CHECK(p.pairs[0].index_a == 0);
  CHECK(p.pairs[0].index_b == 1);
  CHECK(p.pairs[0].gold == 4.5);
  CHECK(p.pairs[1].index_a == 2);

  write_text(dir / "bad.tsv", "0\t1\t2\n0\t1\n");
  try {
    load_pairs(dir / "bad.tsv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  write_text(dir / "neg.tsv", "-1\t1\t2\n");
  CHECK_THROWS_AS(load_pairs(dir / "neg.tsv"), ParseError);
  write_text(dir / "gold.tsv", "0\t1\tabc\n");
  CHECK_THROWS_AS(load_pairs(dir / "gold.tsv"), ParseError);

  save_pairs(dir / "out.tsv", p);
  const auto again = load_pairs(dir / "out.tsv");
  CHECK(again.pairs[0].gold == 4.5);
  CHECK_THROWS_AS(p.check_indices(3), DomainError);
  CHECK_NOTHROW(p.check_indices(4));
}

TEST_CASE("frequency and sentence files") {
  const auto dir = oracle::scratch("freq");
  write_text(dir / "f.txt", "1\n20\n300\n");
  CHECK(load_frequency(dir / "f.txt").ranks == std::vector<std::int64_t>{1, 20, 300});
  write_text(dir / "zero.txt", "1\n0\n");
  try {
    load_frequency(dir / "zero.txt");
    FAIL("expected a validation error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("ranks >= 1") != std::string::npos);
  }
  write_text(dir / "s.txt", "hello world\n\nnaïve café\n");
  const auto s = load_sentences(dir / "s.txt");
  REQUIRE(s.sentences.size() == 3);
  CHECK(s.sentences[1].empty());
  CHECK(s.sentences[2] == "naïve café");
  save_sentences(dir / "s2.txt", s);
  CHECK(load_sentences(dir / "s2.txt").sentences == s.sentences);
}
