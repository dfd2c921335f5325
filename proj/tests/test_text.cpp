/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <cmath>

#include "faultclass/rng.hpp"
#include "faultclass/selfcheck.hpp"
#include "faultclass/text.hpp"

using namespace faultclass;

namespace {

const TokenizerMode kWs = TokenizerMode::whitespace();

std::string random_text(CounterRng& rng) {
  static const std::string alphabet = "abcXYZ  ,.!?-'\t\n01";
  std::string s;
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

std::string join(const TokenList& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

}  // namespace

TEST(Tokenize, WhitespaceStripsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Switch outage, again.", kWs), (TokenList{"switch", "outage", "again"}));
  EXPECT_EQ(tokenize("  ...  --x--  ", kWs), (TokenList{"x"}));
  EXPECT_EQ(tokenize("don't", kWs), (TokenList{"don't"}));
}

TEST(Tokenize, EmptyInput) {
  EXPECT_TRUE(tokenize("", kWs).empty());
  EXPECT_TRUE(tokenize("", TokenizerMode::char_ngram(2)).empty());
}

TEST(Tokenize, CharNgrams) {
  EXPECT_EQ(tokenize("abc", TokenizerMode::char_ngram(2)), (TokenList{"ab", "bc"}));
  EXPECT_EQ(tokenize("a", TokenizerMode::char_ngram(2)), TokenList{});
  EXPECT_EQ(tokenize("A, b", TokenizerMode::char_ngram(2)), (TokenList{"a ", " b"}));
  EXPECT_THROW(tokenize("abc", TokenizerMode::char_ngram(0)), std::invalid_argument);
}

TEST(Tokenize, CharNgramsCountCodePoints) {
  const auto grams = tokenize("日本語", TokenizerMode::char_ngram(2));
  EXPECT_EQ(grams, (TokenList{"日本", "本語"}));
}

TEST(Tokenize, WhitespaceIsIdempotent) {
  CounterRng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto once = tokenize(random_text(rng), kWs);
    EXPECT_EQ(tokenize(join(once), kWs), once);
  }
}

TEST(Vocabulary, FrequencyOrderThenLexicographic) {
  const std::vector<TokenList> docs = {{"a", "b"}, {"a"}};
  const auto v = Vocabulary::build(docs, 1);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id_of("<pad>"), Vocabulary::kUnk);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.id_of("a"), 2);
  EXPECT_EQ(v.id_of("b"), 3);

  const std::vector<TokenList> tied = {{"z", "y", "x"}};
  const auto t = Vocabulary::build(tied, 1);
  EXPECT_EQ(t.regular_tokens(), (std::vector<std::string>{"x", "y", "z"}));
}

TEST(Vocabulary, MinCountExcludesRareTokens) {
  const std::vector<TokenList> docs = {{"a", "b"}, {"a"}};
  const auto v = Vocabulary::build(docs, 2);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_FALSE(v.contains("b"));
  const TokenList doc = {"b"};
  EXPECT_EQ(encode_sequence(doc, v, 2).ids, (std::vector<TokenId>{Vocabulary::kUnk, 0}));
  EXPECT_THROW(Vocabulary::build(docs, 0), std::invalid_argument);
}

TEST(Vocabulary, EmptyDocsGiveReservedOnly) {
  EXPECT_EQ(Vocabulary::build({}, 1).size(), 2u);
}

TEST(Vocabulary, DocumentFrequencyAndRebuild) {
  const std::vector<TokenList> docs = {{"a", "a", "b"}, {"a"}, {"c"}};
  const auto v = Vocabulary::build(docs, 1);
  EXPECT_EQ(v.doc_freq(v.id_of("a")), 2u);
  EXPECT_EQ(v.doc_freq(v.id_of("b")), 1u);
  EXPECT_EQ(v.doc_freq(Vocabulary::kPad), 0u);
  EXPECT_EQ(Vocabulary::from_tokens(v.regular_tokens(), v.regular_doc_freq()), v);
}

TEST(TfIdf, IdfValues) {
  const std::vector<TokenList> one = {{"t"}};
  const auto m1 = fit_tfidf(one, Vocabulary::build(one, 1));
  EXPECT_DOUBLE_EQ(m1.idf[2], 1.0);

  const std::vector<TokenList> four = {{"t", "u"}, {"u"}, {"u"}, {"u"}};
  const auto vocab = Vocabulary::build(four, 1);
  const auto m4 = fit_tfidf(four, vocab);
  EXPECT_DOUBLE_EQ(m4.idf[static_cast<std::size_t>(vocab.id_of("t"))], std::log(5.0 / 2.0) + 1.0);

  // A vocabulary token that occurs in no fitted document.
  const auto wide = Vocabulary::build(std::vector<TokenList>{{"t", "u", "ghost"}}, 1);
  const auto m0 = fit_tfidf(four, wide);
  EXPECT_DOUBLE_EQ(m0.idf[static_cast<std::size_t>(wide.id_of("ghost"))], std::log(5.0) + 1.0);
}

TEST(TfIdf, HandEvaluatedVector) {
  const std::vector<TokenList> docs = {{"a", "b"}};
  const auto model = fit_tfidf(docs, Vocabulary::build(docs, 1));
  const auto v = tfidf_transform(docs[0], model);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
  EXPECT_NEAR(v[2], 0.70710678118654752, 1e-9);
  EXPECT_NEAR(v[3], 0.70710678118654752, 1e-9);
}

TEST(TfIdf, EmptyAndUnknownDocsMapToZero) {
  const std::vector<TokenList> docs = {{"a", "b"}};
  const auto model = fit_tfidf(docs, Vocabulary::build(docs, 1));
  for (const TokenList& doc : {TokenList{}, TokenList{"zzz", "qqq"}}) {
    for (const double x : tfidf_transform(doc, model)) EXPECT_EQ(x, 0.0);
  }
}

TEST(TfIdf, UnitNormOnRandomDocs) {
  CounterRng rng(17);
  std::vector<TokenList> docs;
  for (int d = 0; d < 30; ++d) {
    TokenList doc;
    const std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) doc.push_back("w" + std::to_string(rng.below(25)));
    docs.push_back(doc);
  }
  const auto model = fit_tfidf(docs, Vocabulary::build(docs, 2));
  for (const auto& doc : docs) {
    const auto v = tfidf_transform(doc, model);
    double norm = 0;
    for (const double x : v) norm += x * x;
    if (norm > 0) EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
  }
}

TEST(TfIdf, MatchesBruteForceOracle) {
  const auto outcome = run_tfidf_oracle_check();
  EXPECT_TRUE(outcome.passed);
  EXPECT_LE(outcome.max_relative_error, 1e-12);
  EXPECT_GT(outcome.checked, 0u);
  EXPECT_EQ(tfidf_oracle_corpora().size(), 3u);
  for (const auto& corpus : tfidf_oracle_corpora()) EXPECT_LE(corpus.size(), 5u);
}

TEST(Encode, PaddingTruncationAndUnknowns) {
  const auto vocab = Vocabulary::build(std::vector<TokenList>{{"a"}}, 1);
  const auto padded = encode_sequence(TokenList{"a"}, vocab, 3);
  EXPECT_EQ(padded.ids, (std::vector<TokenId>{2, 0, 0}));
  EXPECT_EQ(padded.true_length, 1u);
  EXPECT_EQ(encode_sequence(TokenList{"nope"}, vocab, 1).ids[0], Vocabulary::kUnk);
  const auto cut = encode_sequence(TokenList{"a", "a", "a", "a", "a"}, vocab, 3);
  EXPECT_EQ(cut.ids.size(), 3u);
  EXPECT_EQ(cut.true_length, 3u);
}
