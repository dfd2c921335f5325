/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace faultclass {

/// Raised for malformed corpus/taxonomy input. `line()` is 1-based, 0 when
/// the error is not tied to a line.
class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// One failure report. Field and major class are not stored here; they are
/// looked up from the subclass code through a Taxonomy.
struct FailureCase {
  std::string id;
  std::string text;
  std::string subclass;

  friend bool operator==(const FailureCase&, const FailureCase&) = default;
};

struct TaxonomyEntry {
  std::string code;
  std::string field;
  std::string major;
  std::string label;
  std::size_t n_failures = 0;
  std::size_t n_test = 0;

  friend bool operator==(const TaxonomyEntry&, const TaxonomyEntry&) = default;
};

/// Three-level label hierarchy: field / major class / subclass code.
///
/// Construction validates that codes are unique, that `n_test <= n_failures`,
/// and that every field uses a single code letter not shared with another
/// field ("C-" for Communication, "F-" for Finance in the default table).
class Taxonomy {
 public:
  explicit Taxonomy(std::vector<TaxonomyEntry> entries);

  const std::vector<TaxonomyEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool contains(std::string_view code) const;
  const TaxonomyEntry* find(std::string_view code) const;
  /// Throws CorpusError for unknown codes.
  const TaxonomyEntry& at(std::string_view code) const;

  const std::string& field_of(std::string_view code) const { return at(code).field; }
  const std::string& major_of(std::string_view code) const { return at(code).major; }

  /// Codes in table order.
  std::vector<std::string> codes() const;
  /// Distinct field names in table order.
  std::vector<std::string> fields() const;

  /// Parses the CSV form: header `code,field,major,label,n_failures,n_test`.
  static Taxonomy from_csv(std::istream& in);
  static Taxonomy load_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;

 private:
  std::vector<TaxonomyEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Built-in taxonomy: 17 coded subclasses across Communication and Finance.
Taxonomy default_taxonomy();

/// Parses JSON Lines (`{"id":..,"text":..,"subclass":..}` per line) and
/// validates every record against the taxonomy. Blank lines are skipped.
std::vector<FailureCase> parse_corpus(std::istream& in, const Taxonomy& taxonomy);
std::vector<FailureCase> load_corpus(const std::filesystem::path& path,
                                     const Taxonomy& taxonomy);
void write_corpus(std::ostream& out, std::span<const FailureCase> cases);

struct CorpusSplit {
  std::vector<FailureCase> train;
  std::vector<FailureCase> test;
};

/// Samples exactly `per_class_test[code]` test cases from each class without
/// replacement. Each class draws from its own stream keyed by
/// mix_seed(seed, hash(code)), so the result does not depend on the order in
/// which classes appear. Classes absent from the map contribute no test cases.
/// Both halves preserve input order.
CorpusSplit stratified_split(std::span<const FailureCase> cases,
                             const std::map<std::string, std::size_t>& per_class_test,
                             std::uint64_t seed);

/// Per-class test counts taken from the taxonomy's n_test column.
std::map<std::string, std::size_t> taxonomy_test_counts(const Taxonomy& taxonomy);

/// Shape of a synthetic corpus.
struct SynthSpec {
  std::size_t keywords_per_subclass = 20;  // K
  std::size_t tokens_per_doc = 30;         // L
  double keyword_prob = 0.8;               // p
  std::size_t background_per_field = 40;
  std::size_t train_per_subclass = 60;
  std::size_t test_per_subclass = 12;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Subclasses a synthetic corpus covers: every taxonomy entry with at least
/// one recorded failure.
std::vector<std::string> synthetic_subclasses(const Taxonomy& taxonomy);

/// Keyword pool of a subclass and background pool of a field. Pools are
/// pairwise disjoint by construction.
std::vector<std::string> keyword_pool(std::string_view code, std::size_t size);
std::vector<std::string> background_pool(std::string_view field_letter, std::size_t size);

/// Each document of subclass s draws every token from s's keyword pool with
/// probability p, otherwise from the background pool of s's field. Output is
/// grouped by subclass in taxonomy order, train_per_subclass +
/// test_per_subclass documents each.
std::vector<FailureCase> generate_synthetic(const SynthSpec& spec, const Taxonomy& taxonomy);

/// Test counts matching a synthetic corpus (test_per_subclass per covered code).
std::map<std::string, std::size_t> synthetic_test_counts(const SynthSpec& spec,
                                                         const Taxonomy& taxonomy);

}  // namespace faultclass
