/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faultclass/text.hpp"

namespace faultclass {

/// V x D word vectors, row-major; row i belongs to vocabulary id i.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

struct SkipGramConfig {
  std::size_t dim = 64;
  std::size_t window = 4;
  std::size_t negatives = 5;
  std::size_t epochs = 15;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SkipGramResult {
  EmbeddingMatrix embeddings;
  /// Mean pair loss of each epoch.
  std::vector<double> epoch_loss;
};

/// Uniform(-0.5/D, 0.5/D) from cfg.seed, PAD row zero.
EmbeddingMatrix init_embeddings(std::size_t rows, const SkipGramConfig& cfg);

/// Skip-gram with negative sampling. Every (center, context) pair within the
/// window gets one positive and `negatives` negative logistic updates;
/// negatives come from the unigram distribution raised to 0.75. PAD and UNK
/// are never centers, contexts or negatives. The learning rate decays
/// linearly over all center tokens of all epochs. Throws
/// std::invalid_argument when docs hold no usable token.
SkipGramResult train_skipgram(std::span<const std::vector<TokenId>> docs, const Vocabulary& vocab,
                              const SkipGramConfig& cfg);

/// dot(a, b) / (|a| |b|). Throws std::invalid_argument on a dimension
/// mismatch or a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Top m non-reserved tokens (excluding the query) by cosine similarity;
/// ties go to the lower id. Throws std::invalid_argument for unknown tokens.
std::vector<std::pair<std::string, double>> nearest_neighbors(std::string_view token,
                                                              std::size_t m,
                                                              const EmbeddingMatrix& matrix,
                                                              const Vocabulary& vocab);

/// One row per vocabulary id: token, then D values.
void write_embeddings_csv(std::ostream& out, const EmbeddingMatrix& matrix,
                          const Vocabulary& vocab);

}  // namespace faultclass
