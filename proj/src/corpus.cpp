/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "faultclass/rng.hpp"

namespace faultclass {

namespace {

std::string line_message(const std::string& what, std::size_t line) {
  if (line == 0) return what;
  return "line " + std::to_string(line) + ": " + what;
}

std::string field_letter(std::string_view code) {
  const auto dash = code.find('-');
  return std::string(code.substr(0, dash == std::string_view::npos ? 1 : dash));
}

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool field_was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"' && current.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
      field_was_quoted = false;
    } else {
      current.push_back(c);
    }
  }
  if (quoted) throw CorpusError("unterminated quoted field", line_no);
  fields.push_back(std::move(current));
  return fields;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::size_t parse_count(const std::string& s, const char* column, std::size_t line_no) {
  std::size_t value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw CorpusError(std::string("invalid ") + column + " '" + s + "'", line_no);
  }
  return value;
}

}  // namespace

CorpusError::CorpusError(const std::string& what, std::size_t line)
    : std::runtime_error(line_message(what, line)), line_(line) {}

Taxonomy::Taxonomy(std::vector<TaxonomyEntry> entries) : entries_(std::move(entries)) {
  std::map<std::string, std::string> letter_of_field;
  std::map<std::string, std::string> field_of_letter;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.code.empty()) throw CorpusError("taxonomy entry with empty code");
    if (e.field.empty() || e.major.empty()) {
      throw CorpusError("taxonomy entry " + e.code + " has empty field or major class");
    }
    if (!index_.emplace(e.code, i).second) {
      throw CorpusError("duplicate taxonomy code " + e.code);
    }
    if (e.n_test > e.n_failures) {
      throw CorpusError("taxonomy entry " + e.code + " has n_test > n_failures");
    }
    const auto letter = field_letter(e.code);
    auto [lit, new_field] = letter_of_field.emplace(e.field, letter);
    if (!new_field && lit->second != letter) {
      throw CorpusError("code " + e.code + " does not use the prefix of field " + e.field);
    }
    auto [fit, new_letter] = field_of_letter.emplace(letter, e.field);
    if (!new_letter && fit->second != e.field) {
      throw CorpusError("code prefix " + letter + " is shared by fields " + fit->second +
                        " and " + e.field);
    }
  }
}

bool Taxonomy::contains(std::string_view code) const { return find(code) != nullptr; }

const TaxonomyEntry* Taxonomy::find(std::string_view code) const {
  const auto it = index_.find(std::string(code));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const TaxonomyEntry& Taxonomy::at(std::string_view code) const {
  const auto* e = find(code);
  if (e == nullptr) throw CorpusError("unknown subclass code '" + std::string(code) + "'");
  return *e;
}

std::vector<std::string> Taxonomy::codes() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.code);
  return out;
}

std::vector<std::string> Taxonomy::fields() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (std::find(out.begin(), out.end(), e.field) == out.end()) out.push_back(e.field);
  }
  return out;
}

Taxonomy Taxonomy::from_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw CorpusError("empty taxonomy file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "code,field,major,label,n_failures,n_test") {
    throw CorpusError("unexpected taxonomy header '" + line + "'", line_no);
  }
  std::vector<TaxonomyEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_csv_record(line, line_no);
    if (cols.size() != 6) {
      throw CorpusError("expected 6 columns, got " + std::to_string(cols.size()), line_no);
    }
    TaxonomyEntry e;
    e.code = std::move(cols[0]);
    e.field = std::move(cols[1]);
    e.major = std::move(cols[2]);
    e.label = std::move(cols[3]);
    e.n_failures = parse_count(cols[4], "n_failures", line_no);
    e.n_test = parse_count(cols[5], "n_test", line_no);
    entries.push_back(std::move(e));
  }
  return Taxonomy(std::move(entries));
}

Taxonomy Taxonomy::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open taxonomy file " + path.string());
  return from_csv(in);
}

void Taxonomy::write_csv(std::ostream& out) const {
  out << "code,field,major,label,n_failures,n_test\n";
  for (const auto& e : entries_) {
    out << csv_quote(e.code) << ',' << csv_quote(e.field) << ',' << csv_quote(e.major) << ','
        << csv_quote(e.label) << ',' << e.n_failures << ',' << e.n_test << '\n';
  }
}

Taxonomy default_taxonomy() {
  const std::string comm = "Communication";
  const std::string fin = "Finance";
  // "information not available" (Finance, 713 cases) carries no code and is omitted.
  return Taxonomy({
      {"C-A1", comm, "service-related", "telecom service suspended", 510, 41},
      {"C-A2", comm, "service-related", "telecom service quality impaired", 122, 10},
      {"C-A3", comm, "service-related", "partial malfunction", 214, 17},
      {"C-B1", comm, "processing-related", "misclaim of charges", 78, 6},
      {"C-C1", comm, "information-related", "information leakage (mistakes)", 71, 6},
      {"C-C2", comm, "information-related", "data loss, incorrect registration", 7, 0},
      {"C-D1", comm, "equipment-related", "malfunction", 114, 9},
      {"C-D2", comm, "equipment-related", "safety problem", 33, 4},
      {"C-E1", comm, "cybercrime-related", "information leakage (crime)", 50, 4},
      {"C-E2", comm, "cybercrime-related", "information security crimes", 30, 3},
      {"C-F1", comm, "other", "other", 9, 0},
      {"F-A1", fin, "service-related", "all service stoppage", 38, 3},
      {"F-A2", fin, "service-related", "terminal stoppage", 193, 14},
      {"F-A3", fin, "service-related", "partial malfunction", 231, 17},
      {"F-E2", fin, "cybercrime-related", "information leakage (crime)", 37, 3},
      {"F-E3", fin, "cybercrime-related", "information security crimes", 24, 2},
      {"F-F1", fin, "other", "other", 0, 0},
  });
}

std::vector<FailureCase> parse_corpus(std::istream& in, const Taxonomy& taxonomy) {
  std::vector<FailureCase> cases;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(std::string("JSON parse error: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw CorpusError("record is not a JSON object", line_no);
    for (const char* key : {"id", "text", "subclass"}) {
      if (!record.contains(key) || !record[key].is_string()) {
        throw CorpusError(std::string("missing or non-string key '") + key + "'", line_no);
      }
    }
    if (record.size() != 3) throw CorpusError("unexpected keys in record", line_no);
    FailureCase c{record["id"].get<std::string>(), record["text"].get<std::string>(),
                  record["subclass"].get<std::string>()};
    if (c.text.empty()) throw CorpusError("empty text for id '" + c.id + "'", line_no);
    if (!taxonomy.contains(c.subclass)) {
      throw CorpusError("unknown subclass code '" + c.subclass + "'", line_no);
    }
    if (!seen_ids.insert(c.id).second) {
      throw CorpusError("duplicate id '" + c.id + "'", line_no);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<FailureCase> load_corpus(const std::filesystem::path& path,
                                     const Taxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  return parse_corpus(in, taxonomy);
}

void write_corpus(std::ostream& out, std::span<const FailureCase> cases) {
  for (const auto& c : cases) {
    nlohmann::ordered_json record;
    record["id"] = c.id;
    record["text"] = c.text;
    record["subclass"] = c.subclass;
    out << record.dump() << '\n';
  }
}

CorpusSplit stratified_split(std::span<const FailureCase> cases,
                             const std::map<std::string, std::size_t>& per_class_test,
                             std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < cases.size(); ++i) by_class[cases[i].subclass].push_back(i);

  std::vector<char> is_test(cases.size(), 0);
  for (const auto& [code, count] : per_class_test) {
    if (count == 0) continue;
    const auto it = by_class.find(code);
    const std::size_t available = it == by_class.end() ? 0 : it->second.size();
    if (count > available) {
      throw CorpusError("insufficient cases in class " + code + ": requested " +
                        std::to_string(count) + ", available " + std::to_string(available));
    }
    // Partial Fisher-Yates: the first `count` slots become the sample.
    auto members = it->second;
    CounterRng rng(mix_seed(seed, hash_string(code)));
    for (std::size_t k = 0; k < count; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(members.size() - k));
      std::swap(members[k], members[j]);
      is_test[members[k]] = 1;
    }
  }

  CorpusSplit split;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    (is_test[i] ? split.test : split.train).push_back(cases[i]);
  }
  return split;
}

std::map<std::string, std::size_t> taxonomy_test_counts(const Taxonomy& taxonomy) {
  std::map<std::string, std::size_t> out;
  for (const auto& e : taxonomy.entries()) out[e.code] = e.n_test;
  return out;
}

void SynthSpec::validate() const {
  if (keywords_per_subclass < 1) throw std::invalid_argument("keywords_per_subclass must be >= 1");
  if (tokens_per_doc < 1) throw std::invalid_argument("tokens_per_doc must be >= 1");
  if (!(keyword_prob > 0.0 && keyword_prob <= 1.0)) {
    throw std::invalid_argument("keyword_prob must be in (0, 1]");
  }
  if (background_per_field < 1) throw std::invalid_argument("background_per_field must be >= 1");
  if (train_per_subclass < 1) throw std::invalid_argument("train_per_subclass must be >= 1");
  if (test_per_subclass < 1) throw std::invalid_argument("test_per_subclass must be >= 1");
}

std::vector<std::string> synthetic_subclasses(const Taxonomy& taxonomy) {
  std::vector<std::string> out;
  for (const auto& e : taxonomy.entries()) {
    if (e.n_failures > 0) out.push_back(e.code);
  }
  return out;
}

namespace {

std::string lower_alnum(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::string pad_index(std::size_t i, std::size_t width) {
  auto s = std::to_string(i);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

}  // namespace

// Keyword tokens start with "kw", background tokens with "bg"; the remaining
// characters are the (lowercased alphanumeric) code or field letter, "x", and
// an index. The "x" separator keeps "kwca1x1" and "kwca11x..." distinct.
std::vector<std::string> keyword_pool(std::string_view code, std::size_t size) {
  std::vector<std::string> pool;
  pool.reserve(size);
  const auto stem = "kw" + lower_alnum(code) + "x";
  for (std::size_t i = 0; i < size; ++i) pool.push_back(stem + pad_index(i, 2));
  return pool;
}

std::vector<std::string> background_pool(std::string_view field_letter, std::size_t size) {
  std::vector<std::string> pool;
  pool.reserve(size);
  const auto stem = "bg" + lower_alnum(field_letter) + "x";
  for (std::size_t i = 0; i < size; ++i) pool.push_back(stem + pad_index(i, 2));
  return pool;
}

std::vector<FailureCase> generate_synthetic(const SynthSpec& spec, const Taxonomy& taxonomy) {
  spec.validate();
  std::map<std::string, std::vector<std::string>> backgrounds;
  for (const auto& e : taxonomy.entries()) {
    const auto letter = field_letter(e.code);
    if (!backgrounds.contains(letter)) {
      backgrounds.emplace(letter, background_pool(letter, spec.background_per_field));
    }
  }

  const std::size_t per_class = spec.train_per_subclass + spec.test_per_subclass;
  const std::size_t width = std::to_string(per_class - 1).size();
  std::vector<FailureCase> cases;
  for (const auto& code : synthetic_subclasses(taxonomy)) {
    const auto keywords = keyword_pool(code, spec.keywords_per_subclass);
    const auto& background = backgrounds.at(field_letter(code));
    CounterRng rng(mix_seed(spec.seed, hash_string(code)));
    for (std::size_t d = 0; d < per_class; ++d) {
      std::string text;
      for (std::size_t t = 0; t < spec.tokens_per_doc; ++t) {
        if (t > 0) text.push_back(' ');
        if (rng.bernoulli(spec.keyword_prob)) {
          text += keywords[rng.below(keywords.size())];
        } else {
          text += background[rng.below(background.size())];
        }
      }
      cases.push_back({code + "-" + pad_index(d, width), std::move(text), code});
    }
  }
  return cases;
}

std::map<std::string, std::size_t> synthetic_test_counts(const SynthSpec& spec,
                                                         const Taxonomy& taxonomy) {
  std::map<std::string, std::size_t> out;
  for (const auto& code : synthetic_subclasses(taxonomy)) out[code] = spec.test_per_subclass;
  return out;
}

}  // namespace faultclass
