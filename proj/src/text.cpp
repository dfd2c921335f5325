/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace faultclass {

namespace {

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

bool is_ascii_space(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isspace(u);
}

char ascii_lower(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 ? static_cast<char>(std::tolower(u)) : c;
}

// Byte length of the UTF-8 sequence starting with `lead`; malformed leads count as 1.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

}  // namespace

TokenList tokenize(std::string_view text, TokenizerMode mode) {
  TokenList tokens;
  if (mode.kind == TokenizerMode::Kind::whitespace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_ascii_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_ascii_space(text[j])) ++j;
      std::size_t b = i;
      std::size_t e = j;
      while (b < e && is_ascii_punct(text[b])) ++b;
      while (e > b && is_ascii_punct(text[e - 1])) --e;
      if (b < e) {
        std::string token(text.substr(b, e - b));
        std::transform(token.begin(), token.end(), token.begin(), ascii_lower);
        tokens.push_back(std::move(token));
      }
      i = j;
    }
    return tokens;
  }

  if (mode.n == 0) throw std::invalid_argument("char_ngram length must be >= 1");
  std::string cleaned;
  bool pending_space = false;
  for (char c : text) {
    if (is_ascii_punct(c)) continue;
    if (is_ascii_space(c)) {
      pending_space = !cleaned.empty();
      continue;
    }
    if (pending_space) cleaned.push_back(' ');
    pending_space = false;
    cleaned.push_back(ascii_lower(c));
  }
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < cleaned.size();) {
    starts.push_back(i);
    i += std::min(utf8_length(static_cast<unsigned char>(cleaned[i])), cleaned.size() - i);
  }
  starts.push_back(cleaned.size());
  const std::size_t n_chars = starts.size() - 1;
  for (std::size_t k = 0; k + mode.n <= n_chars; ++k) {
    tokens.push_back(cleaned.substr(starts[k], starts[k + mode.n] - starts[k]));
  }
  return tokens;
}

Vocabulary::Vocabulary()
    : tokens_{std::string(kPadToken), std::string(kUnkToken)}, doc_freq_{0, 0} {}

Vocabulary Vocabulary::build(std::span<const TokenList> docs, std::size_t min_count) {
  if (min_count == 0) throw std::invalid_argument("min_count must be >= 1");
  std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // count, df
  for (const auto& doc : docs) {
    std::unordered_set<std::string_view> seen;
    for (const auto& token : doc) {
      auto& s = stats[token];
      ++s.first;
      if (seen.insert(token).second) ++s.second;
    }
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> kept;
  for (auto& [token, s] : stats) {
    if (s.first >= min_count) kept.emplace_back(token, s);
  }
  // `stats` is lexicographically ordered, so a stable sort by count keeps the tie-break.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second.first > b.second.first;
  });
  std::vector<std::string> tokens;
  std::vector<std::size_t> df;
  tokens.reserve(kept.size());
  df.reserve(kept.size());
  for (auto& [token, s] : kept) {
    tokens.push_back(token);
    df.push_back(s.second);
  }
  return from_tokens(std::move(tokens), std::move(df));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens,
                                   std::vector<std::size_t> doc_freq) {
  if (tokens.size() != doc_freq.size()) {
    throw std::invalid_argument("vocabulary tokens and doc_freq differ in length");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto id = static_cast<TokenId>(kReserved + i);
    if (!v.ids_.emplace(tokens[i], id).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens[i] + "'");
    }
    v.tokens_.push_back(std::move(tokens[i]));
    v.doc_freq_.push_back(doc_freq[i]);
  }
  return v;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

std::vector<std::string> Vocabulary::regular_tokens() const {
  return {tokens_.begin() + kReserved, tokens_.end()};
}

std::vector<std::size_t> Vocabulary::regular_doc_freq() const {
  return {doc_freq_.begin() + kReserved, doc_freq_.end()};
}

TfIdfModel fit_tfidf(std::span<const TokenList> docs, const Vocabulary& vocab) {
  std::vector<std::size_t> df(vocab.size(), 0);
  for (const auto& doc : docs) {
    std::unordered_set<TokenId> seen;
    for (const auto& token : doc) {
      const auto id = vocab.id_of(token);
      if (id != Vocabulary::kUnk && seen.insert(id).second) ++df[static_cast<std::size_t>(id)];
    }
  }
  TfIdfModel model{vocab, std::vector<double>(vocab.size()), docs.size()};
  const double n = static_cast<double>(docs.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    model.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }
  return model;
}

std::vector<double> tfidf_transform(std::span<const std::string> doc, const TfIdfModel& model) {
  std::vector<double> v(model.vocab.size(), 0.0);
  if (doc.empty()) return v;
  for (const auto& token : doc) {
    const auto id = model.vocab.id_of(token);
    if (id != Vocabulary::kUnk) v[static_cast<std::size_t>(id)] += 1.0;
  }
  const double len = static_cast<double>(doc.size());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) continue;
    v[i] = v[i] / len * model.idf[i];
    norm2 += v[i] * v[i];
  }
  if (norm2 == 0.0) return v;
  const double norm = std::sqrt(norm2);
  for (auto& x : v) x /= norm;
  return v;
}

EncodedSequence encode_sequence(std::span<const std::string> doc, const Vocabulary& vocab,
                                std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("max_len must be >= 1");
  EncodedSequence seq{std::vector<TokenId>(max_len, Vocabulary::kPad),
                      std::min(doc.size(), max_len)};
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id_of(doc[i]);
  return seq;
}

}  // namespace faultclass
