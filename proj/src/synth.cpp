#include "flowcal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flowcal/eval.hpp"

namespace flowcal {

void SynthConfig::validate() const {
  if (n_sentences < 2) throw DomainError("synth: n_sentences must be >= 2");
  if (latent_dim < 1) throw DomainError("synth: latent_dim must be >= 1");
  if (observed_dim < 2) throw DomainError("synth: observed_dim must be >= 2");
  if (latent_dim > observed_dim) throw DomainError("synth: latent_dim must be <= observed_dim");
  if (!(condition_number >= 1.0)) throw DomainError("synth: condition number must be >= 1");
  if (!(frequency_shift >= 0.0) || !(noise_std >= 0.0) || !(zipf_exponent >= 0.0))
    throw DomainError("synth: strengths must be >= 0");
  if (n_pairs < 1) throw DomainError("synth: n_pairs must be >= 1");
  const auto n = static_cast<std::uint64_t>(n_sentences);
  if (static_cast<std::uint64_t>(n_pairs) > n * (n - 1) / 2)
    throw DomainError("synth: n_pairs = " + std::to_string(n_pairs) + " exceeds the " +
                      std::to_string(n * (n - 1) / 2) + " distinct pairs");
}

double gold_oracle(const Vector& z_a, const Vector& z_b) {
  return 2.5 * (1.0 + cosine(z_a, z_b));
}

namespace {

std::vector<std::int64_t> zipf_ranks(Rng& rng, Index n, double exponent) {
  std::vector<double> cdf(static_cast<std::size_t>(kZipfVocabulary));
  double total = 0.0;
  for (std::int64_t r = 1; r <= kZipfVocabulary; ++r) {
    total += std::pow(static_cast<double>(r), -exponent);
    cdf[static_cast<std::size_t>(r - 1)] = total;
  }
  std::vector<std::int64_t> ranks(static_cast<std::size_t>(n));
  for (auto& r : ranks) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    r = std::min<std::int64_t>(it - cdf.begin() + 1, kZipfVocabulary);
  }
  return ranks;
}

Matrix mixing_matrix(Rng& rng, Index observed, Index latent, double kappa) {
  const Matrix q = random_orthogonal(rng, observed).leftCols(latent);
  const Matrix r = random_orthogonal(rng, latent);
  Vector sigma(latent);
  for (Index i = 0; i < latent; ++i) {
    const double t = latent == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(latent - 1);
    sigma(i) = std::pow(kappa, 1.0 - t);  // kappa ... 1
  }
  sigma /= std::sqrt(sigma.squaredNorm() / static_cast<double>(latent));
  return q * sigma.asDiagonal() * r.transpose();
}

std::vector<std::pair<Index, Index>> sample_pairs(Rng& rng, Index n, Index count) {
  const auto total = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<std::size_t>(count));
  if (static_cast<std::uint64_t>(count) * 3 >= total) {
    std::vector<std::pair<Index, Index>> all;
    all.reserve(static_cast<std::size_t>(total));
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) all.emplace_back(i, j);
    for (Index k = 0; k < count; ++k) {
      const auto pick = k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(all.size()) -
                                                         static_cast<std::uint64_t>(k)));
      std::swap(all[static_cast<std::size_t>(k)], all[static_cast<std::size_t>(pick)]);
      out.push_back(all[static_cast<std::size_t>(k)]);
    }
    return out;
  }
  std::set<std::pair<Index, Index>> seen;
  while (static_cast<Index>(out.size()) < count) {
    const auto a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    const auto b = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    if (a == b) continue;
    const auto p = std::minmax(a, b);
    if (seen.insert(p).second) out.emplace_back(p.first, p.second);
  }
  return out;
}

// Toy sentences: a run of a frequency-marker word whose length tracks ln(rank),
// followed by random filler words.
std::string toy_sentence(Rng& rng, std::int64_t rank) {
  const auto repeats = static_cast<int>(std::lround(2.0 * std::log(static_cast<double>(rank))));
  std::string s;
  for (int i = 0; i < repeats; ++i) s += "of ";
  for (int w = 0; w < 4; ++w) {
    const auto len = 3 + rng.below(4);
    for (std::uint64_t c = 0; c < len; ++c) s.push_back(static_cast<char>('a' + rng.below(26)));
    if (w < 3) s.push_back(' ');
  }
  return s;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthData out;
  out.latent = gaussian_sample(rng, cfg.n_sentences, cfg.latent_dim);
  out.frequency.ranks = zipf_ranks(rng, cfg.n_sentences, cfg.zipf_exponent);
  out.mixing = mixing_matrix(rng, cfg.observed_dim, cfg.latent_dim, cfg.condition_number);
  Vector direction = gaussian_sample(rng, cfg.observed_dim, 1).col(0);
  direction.normalize();

  Matrix u = out.latent * out.mixing.transpose();
  for (Index i = 0; i < cfg.n_sentences; ++i)
    u.row(i) += cfg.frequency_shift *
                std::log(static_cast<double>(out.frequency.ranks[static_cast<std::size_t>(i)])) *
                direction.transpose();
  // Drawn even at zero strength so later draws do not depend on noise_std.
  u += cfg.noise_std * gaussian_sample(rng, cfg.n_sentences, cfg.observed_dim);
  out.embeddings = {std::move(u), "synth-seed" + std::to_string(cfg.seed)};

  for (const auto& [a, b] : sample_pairs(rng, cfg.n_sentences, cfg.n_pairs))
    out.pairs.pairs.push_back(
        {a, b, gold_oracle(out.latent.row(a).transpose(), out.latent.row(b).transpose())});

  if (cfg.sentences) {
    SentenceFile s;
    for (auto r : out.frequency.ranks) s.sentences.push_back(toy_sentence(rng, r));
    out.sentences = std::move(s);
  }
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_embeddings(dir / "embeddings.embd", data.embeddings);
  save_pairs(dir / "pairs.tsv", data.pairs);
  save_frequency(dir / "frequency.txt", data.frequency);
  if (data.sentences) save_sentences(dir / "sentences.txt", *data.sentences);
}

}  // namespace flowcal
