/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultclass/corpus.hpp"
#include "faultclass/models.hpp"

namespace faultclass {

/// Fraction of equal positions. Throws std::invalid_argument on a length
/// mismatch or empty input.
double accuracy(std::span<const std::string> predicted, std::span<const std::string> gold);

/// Disagreement counts at each taxonomy granularity. Major classes are
/// compared by name, so "service-related" in two fields counts as the same
/// major class.
struct MismatchBreakdown {
  std::size_t n_test = 0;
  std::size_t subclass_mismatch = 0;
  std::size_t major_name_mismatch = 0;
  std::size_t field_mismatch = 0;
  /// Field differs but the major class name agrees.
  std::size_t cross_field_same_major = 0;

  double rate(std::size_t count) const {
    return n_test == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n_test);
  }
  double subclass_rate() const { return rate(subclass_mismatch); }
  double major_rate() const { return rate(major_name_mismatch); }
  double field_rate() const { return rate(field_mismatch); }
  double cross_field_same_major_rate() const { return rate(cross_field_same_major); }

  MismatchBreakdown& operator+=(const MismatchBreakdown& other);
  friend bool operator==(const MismatchBreakdown&, const MismatchBreakdown&) = default;
};

/// Throws CorpusError for codes missing from the taxonomy and
/// std::invalid_argument for a length mismatch.
MismatchBreakdown mismatch_analysis(std::span<const std::string> predicted,
                                    std::span<const std::string> gold, const Taxonomy& taxonomy);

/// counts[g][p]: cases with gold codes[g] predicted as codes[p].
struct ConfusionMatrix {
  std::vector<std::string> codes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t diagonal() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(std::span<const std::string> predicted,
                                 std::span<const std::string> gold,
                                 std::vector<std::string> codes);

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double subclass_accuracy = 0.0;
  /// Major class derived from the predicted subclass through the taxonomy.
  double major_accuracy = 0.0;
  /// Separate major-level model, when requested.
  std::optional<double> major_model_accuracy;
  MismatchBreakdown mismatch;
  ConfusionMatrix confusion;
  std::vector<double> history;
  std::string checkpoint_sha256;

  // wall-clock, excluded from the deterministic part of a report
  double train_seconds = 0.0;
  double mean_latency_s = 0.0;
  double max_latency_s = 0.0;
};

struct EvalReport {
  ModelKind kind = ModelKind::mlp;
  ModelConfig config;
  std::size_t n_runs = 0;
  std::uint64_t master_seed = 0;
  std::string split_digest;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<RunResult> runs;

  double mean_subclass_accuracy = 0.0;
  double mean_major_accuracy = 0.0;
  std::optional<double> mean_major_model_accuracy;
  MismatchBreakdown pooled;
  ConfusionMatrix pooled_confusion;

  double total_seconds = 0.0;
  double mean_latency_s = 0.0;
  double max_latency_s = 0.0;
};

struct EvalOptions {
  /// Also train a major-level model per run and report its accuracy.
  bool with_major_model = false;
  /// Called with a one-line status after each run (for stderr logging).
  std::function<void(const std::string&)> progress;
  /// When set, receives the subclass model of each run.
  std::vector<Model>* models_out = nullptr;
};

/// Digest of the train/test id lists, used to check that reports share a split.
std::string split_digest(const CorpusSplit& split);

/// Trains n_runs subclass-level models on the fixed split, run i seeded with
/// mix_seed(master_seed, i), and aggregates accuracies, mismatch counts,
/// confusion matrices and timings. `config.level` and `config.seed` are
/// overridden per run. Throws std::invalid_argument for n_runs == 0.
EvalReport repeated_runs(const CorpusSplit& split, const Taxonomy& taxonomy, ModelConfig config,
                         std::size_t n_runs, std::uint64_t master_seed,
                         const EvalOptions& options = {});

/// Recomputes means and pooled totals from `report.runs`.
void aggregate(EvalReport& report);

/// Timing fields are written only when `include_timings` is set; without
/// them the output is a pure function of (split, config, seeds).
nlohmann::json report_to_json(const EvalReport& report, bool include_timings = true);
EvalReport report_from_json(const nlohmann::json& j);

struct ComparisonRow {
  ModelKind kind = ModelKind::mlp;
  double mean_subclass_accuracy = 0.0;
  double mean_major_accuracy = 0.0;
  std::optional<double> mean_major_model_accuracy;
  std::vector<double> run_subclass_accuracy;
  std::vector<double> run_major_accuracy;
  std::vector<double> run_major_model_accuracy;
  std::size_t subclass_rank = 0;
  std::size_t major_rank = 0;
  MismatchBreakdown pooled;
};

struct Comparison {
  std::size_t n_runs = 0;
  std::string split_digest;
  std::vector<ComparisonRow> rows;  // ordered mlp, cnn, rnn
};

/// Side-by-side table ranked per level (1 = best; equal means share a rank).
/// Throws std::invalid_argument when reports differ in split or run count.
Comparison compare_models(std::span<const EvalReport> reports);
nlohmann::json comparison_to_json(const Comparison& comparison);
/// model,level,mean,run1..runN
void write_accuracy_csv(std::ostream& out, const Comparison& comparison);
/// model,granularity,rate
void write_mismatch_csv(std::ostream& out, const Comparison& comparison);

}  // namespace faultclass
