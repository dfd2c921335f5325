/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include "faultclass/embedding.hpp"
#include "faultclass/rng.hpp"
#include "faultclass/text.hpp"

namespace faultclass::testing {

/// Toy corpus in which "alpha" and "beta" occur in exactly the same contexts,
/// while filler tokens each keep to their own neighbourhood.
inline std::vector<TokenList> planted_synonym_corpus() {
  std::vector<TokenList> docs;
  CounterRng rng(2024);
  auto ctx = [&] { return "ctx" + std::to_string(rng.below(6)); };
  for (int r = 0; r < 40; ++r) {
    const TokenList around = {ctx(), ctx(), ctx(), ctx()};
    for (const char* word : {"alpha", "beta"}) {
      docs.push_back({around[0], around[1], word, around[2], around[3]});
    }
  }
  for (int group = 0; group < 6; ++group) {
    const std::string g = std::to_string(group);
    for (int r = 0; r < 10; ++r) {
      docs.push_back({"pre" + g, "fill" + g + "a", "mid" + g, "fill" + g + "b", "post" + g});
    }
  }
  return docs;
}

struct EncodedCorpus {
  Vocabulary vocab;
  std::vector<std::vector<TokenId>> ids;
};

inline EncodedCorpus encode_all(const std::vector<TokenList>& docs) {
  EncodedCorpus out{Vocabulary::build(docs, 1), {}};
  for (const auto& d : docs) {
    std::vector<TokenId> row;
    for (const auto& t : d) row.push_back(out.vocab.id_of(t));
    out.ids.push_back(std::move(row));
  }
  return out;
}

inline SkipGramConfig toy_skipgram(std::uint64_t seed) {
  SkipGramConfig cfg;
  cfg.dim = 16;
  cfg.window = 2;
  cfg.epochs = 50;
  cfg.seed = seed;
  return cfg;
}

/// Mean cosine similarity over all pairs of non-reserved tokens.
inline double mean_pairwise_cosine(const EmbeddingMatrix& m) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t a = Vocabulary::kReserved; a < m.rows; ++a) {
    for (std::size_t b = a + 1; b < m.rows; ++b) {
      total += cosine_similarity(m.row(a), m.row(b));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace faultclass::testing
