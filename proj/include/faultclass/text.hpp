/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace faultclass {

using TokenList = std::vector<std::string>;
using TokenId = std::int32_t;

struct TokenizerMode {
  enum class Kind { whitespace, char_ngram };
  Kind kind = Kind::whitespace;
  std::size_t n = 0;  // n-gram length, char_ngram only

  static TokenizerMode whitespace() { return {Kind::whitespace, 0}; }
  static TokenizerMode char_ngram(std::size_t n) { return {Kind::char_ngram, n}; }

  friend bool operator==(const TokenizerMode&, const TokenizerMode&) = default;
};

/// Whitespace mode lowercases, splits on whitespace and strips leading and
/// trailing ASCII punctuation from each piece (pieces that become empty are
/// dropped). char_ngram(n) removes all ASCII punctuation, lowercases,
/// collapses whitespace runs to one space and returns every overlapping
/// n-code-point window. Bytes >= 0x80 are left untouched, so UTF-8 text
/// passes through intact. Throws std::invalid_argument for char_ngram(0).
TokenList tokenize(std::string_view text, TokenizerMode mode);

/// Token <-> id map with two reserved ids: PAD = 0 and UNK = 1.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::size_t kReserved = 2;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  /// Reserved ids only.
  Vocabulary();

  /// Tokens with total frequency >= min_count, ids assigned by descending
  /// frequency with lexicographic tie-break. Throws for min_count == 0.
  static Vocabulary build(std::span<const TokenList> docs, std::size_t min_count);

  /// Rebuilds from serialized state: non-reserved tokens in id order and
  /// their document frequencies.
  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                std::vector<std::size_t> doc_freq);

  std::size_t size() const noexcept { return tokens_.size(); }
  /// UNK for tokens outside the vocabulary (including the reserved spellings).
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// Document frequency in the build corpus; 0 for reserved ids.
  std::size_t doc_freq(TokenId id) const { return doc_freq_.at(static_cast<std::size_t>(id)); }

  /// Non-reserved tokens in id order.
  std::vector<std::string> regular_tokens() const;
  std::vector<std::size_t> regular_doc_freq() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.doc_freq_ == b.doc_freq_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Smoothed TF-IDF weights over a vocabulary.
struct TfIdfModel {
  Vocabulary vocab;
  std::vector<double> idf;  // one per vocabulary id (reserved ids included)
  std::size_t n_docs = 0;
};

/// idf(t) = ln((1 + N) / (1 + df(t))) + 1 with df counted over `docs`.
TfIdfModel fit_tfidf(std::span<const TokenList> docs, const Vocabulary& vocab);

/// Vocabulary-sized vector v_t = (count(t, doc) / |doc|) * idf(t), L2
/// normalized. |doc| counts every token, in vocabulary or not. Reserved
/// slots are always zero; a document with no known tokens maps to zeros.
std::vector<double> tfidf_transform(std::span<const std::string> doc, const TfIdfModel& model);

struct EncodedSequence {
  std::vector<TokenId> ids;
  std::size_t true_length = 0;

  friend bool operator==(const EncodedSequence&, const EncodedSequence&) = default;
};

/// First max_len ids (UNK for unknown tokens), right-padded with PAD.
EncodedSequence encode_sequence(std::span<const std::string> doc, const Vocabulary& vocab,
                                std::size_t max_len);

}  // namespace faultclass
