/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <sstream>

#include "faultclass/embedding.hpp"
#include "fixtures.hpp"

using namespace faultclass;
using namespace faultclass::testing;

TEST(SkipGram, PlantedSynonymBeatsMeanSimilarity) {
  const auto corpus = encode_all(planted_synonym_corpus());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto result = train_skipgram(corpus.ids, corpus.vocab, toy_skipgram(seed));
    const auto& m = result.embeddings;
    const double syn = cosine_similarity(m.row(corpus.vocab.id_of("alpha")),
                                         m.row(corpus.vocab.id_of("beta")));
    EXPECT_GT(syn, mean_pairwise_cosine(m)) << "seed " << seed;
    const auto nn = nearest_neighbors("alpha", 1, m, corpus.vocab);
    ASSERT_EQ(nn.size(), 1u);
    EXPECT_EQ(nn[0].first, "beta") << "seed " << seed;
  }
}

TEST(SkipGram, DeterministicPerSeed) {
  const auto corpus = encode_all(planted_synonym_corpus());
  auto cfg = toy_skipgram(3);
  cfg.epochs = 3;
  const auto a = train_skipgram(corpus.ids, corpus.vocab, cfg);
  const auto b = train_skipgram(corpus.ids, corpus.vocab, cfg);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  cfg.seed = 4;
  EXPECT_NE(a.embeddings, train_skipgram(corpus.ids, corpus.vocab, cfg).embeddings);
}

TEST(SkipGram, ZeroEpochsLeavesInitialization) {
  const auto corpus = encode_all(planted_synonym_corpus());
  auto cfg = toy_skipgram(9);
  cfg.epochs = 0;
  const auto result = train_skipgram(corpus.ids, corpus.vocab, cfg);
  EXPECT_EQ(result.embeddings, init_embeddings(corpus.vocab.size(), cfg));
  EXPECT_TRUE(result.epoch_loss.empty());
}

TEST(SkipGram, InitializationBoundsAndPadRow) {
  SkipGramConfig cfg;
  const auto m = init_embeddings(10, cfg);
  for (std::size_t d = 0; d < cfg.dim; ++d) EXPECT_EQ(m.row(0)[d], 0.0);
  for (std::size_t i = cfg.dim; i < m.values.size(); ++i) {
    EXPECT_LE(std::abs(m.values[i]), 0.5 / static_cast<double>(cfg.dim));
  }
}

TEST(SkipGram, LossDecreasesAndPadStaysZero) {
  const auto corpus = encode_all(planted_synonym_corpus());
  auto cfg = toy_skipgram(2);
  cfg.epochs = 10;
  const auto result = train_skipgram(corpus.ids, corpus.vocab, cfg);
  ASSERT_EQ(result.epoch_loss.size(), 10u);
  EXPECT_LE(result.epoch_loss.back(), result.epoch_loss.front());
  for (const double x : result.embeddings.row(0)) EXPECT_EQ(x, 0.0);
}

TEST(SkipGram, ReservedIdsAreNeverTrained) {
  // A corpus of two tokens plus UNK occurrences; the UNK row keeps its initial value.
  Vocabulary vocab = Vocabulary::build(std::vector<TokenList>{{"p", "q"}}, 1);
  const std::vector<std::vector<TokenId>> docs = {{2, 1, 3, 1, 2, 3}, {3, 2, 1}};
  auto cfg = toy_skipgram(1);
  cfg.epochs = 5;
  const auto result = train_skipgram(docs, vocab, cfg);
  const auto init = init_embeddings(vocab.size(), cfg);
  for (std::size_t d = 0; d < cfg.dim; ++d) {
    EXPECT_EQ(result.embeddings.row(1)[d], init.row(1)[d]);
  }
}

TEST(SkipGram, RejectsCorpusWithoutUsableTokens) {
  const Vocabulary vocab;
  const std::vector<std::vector<TokenId>> docs = {{0, 1, 1}};
  EXPECT_THROW(train_skipgram(docs, vocab, toy_skipgram(1)), std::invalid_argument);
}

TEST(Cosine, SpecialCases) {
  const std::vector<double> v = {0.3, -2.0, 5.0};
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-12);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), -1.0);
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
               std::invalid_argument);
  EXPECT_THROW(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}),
               std::invalid_argument);
}

TEST(Neighbors, EmptyAndExhaustiveRequests) {
  const auto corpus = encode_all(planted_synonym_corpus());
  auto cfg = toy_skipgram(1);
  cfg.epochs = 2;
  const auto m = train_skipgram(corpus.ids, corpus.vocab, cfg).embeddings;
  EXPECT_TRUE(nearest_neighbors("alpha", 0, m, corpus.vocab).empty());
  const auto all = nearest_neighbors("alpha", 1000, m, corpus.vocab);
  EXPECT_EQ(all.size(), corpus.vocab.size() - Vocabulary::kReserved - 1);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].second, all[i].second);
  for (const auto& [token, sim] : all) EXPECT_NE(token, "alpha");
  EXPECT_THROW(nearest_neighbors("missing", 3, m, corpus.vocab), std::invalid_argument);
}

TEST(Neighbors, TiesGoToLowerId) {
  const Vocabulary vocab = Vocabulary::from_tokens({"q", "a", "b"}, {1, 1, 1});
  EmbeddingMatrix m{5, 2, {0, 0, 0, 0, 1, 0, 1, 1, 1, 1}};
  const auto nn = nearest_neighbors("q", 2, m, vocab);
  EXPECT_EQ(nn[0].first, "a");
  EXPECT_EQ(nn[1].first, "b");
}

TEST(Embeddings, CsvHasOneRowPerId) {
  const Vocabulary vocab = Vocabulary::from_tokens({"q"}, {1});
  EmbeddingMatrix m{3, 2, {0, 0, 0.5, 0.25, 1, 2}};
  std::ostringstream out;
  write_embeddings_csv(out, m, vocab);
  std::istringstream in(out.str());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_GE(rows, 3u);
  EXPECT_NE(out.str().find("q,1,2"), std::string::npos);
}
