#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "flowcal/embedding_store.hpp"
#include "flowcal/numerics.hpp"

// Deterministic anisotropic, frequency-biased embeddings with planted gold
// similarity:
//
//   z_i ~ N(0, I_latent)            r_i ~ Zipf(s) on {1..kZipfVocabulary}
//   u_i = W z_i + c ln(r_i) v + eps_i,   eps_i ~ N(0, noise_std^2 I)
//   gold(a, b) = 2.5 (1 + cos(z_a, z_b))
//
// W = Q diag(sigma) R^T with Q (observed x latent) orthonormal columns, R an
// orthogonal latent x latent matrix and sigma geometric with max/min = kappa,
// scaled to unit root-mean-square. v is a random unit vector.

namespace flowcal {

inline constexpr std::int64_t kZipfVocabulary = 9999;

struct SynthConfig {
  Index n_sentences = 2000;
  Index latent_dim = 16;
  Index observed_dim = 32;
  double condition_number = 100.0;
  double frequency_shift = 1.5;
  double noise_std = 0.01;
  double zipf_exponent = 1.1;
  Index n_pairs = 1000;
  bool sentences = true;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SynthData {
  EmbeddingMatrix embeddings;
  PairDataset pairs;
  FrequencyTable frequency;
  std::optional<SentenceFile> sentences;
  Matrix latent;  // z, kept for oracles
  Matrix mixing;  // W
};

SynthData generate(const SynthConfig& config);

// 2.5 * (1 + cosine(z_a, z_b)); throws on zero vectors.
double gold_oracle(const Vector& z_a, const Vector& z_b);

// Writes embeddings.embd, pairs.tsv, frequency.txt and (if present)
// sentences.txt into `dir`, creating it if needed.
void write_synth(const std::filesystem::path& dir, const SynthData& data);

}  // namespace flowcal
