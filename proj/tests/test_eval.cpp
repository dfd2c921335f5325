/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "faultclass/eval.hpp"

using namespace faultclass;

namespace {

std::vector<std::string> repeat(const std::string& s, std::size_t n) {
  return std::vector<std::string>(n, s);
}

RunResult fake_run(std::size_t run, double sub, double major) {
  RunResult r;
  r.run = run;
  r.seed = run * 11;
  r.subclass_accuracy = sub;
  r.major_accuracy = major;
  r.mismatch.n_test = 10;
  r.mismatch.subclass_mismatch = run;
  r.confusion = {{"C-A1", "C-A2"}, {{run, 1}, {0, 2}}};
  r.mean_latency_s = 0.001 * static_cast<double>(run + 1);
  r.max_latency_s = 0.002 * static_cast<double>(run + 1);
  return r;
}

EvalReport fake_report(ModelKind kind, std::vector<double> sub, std::vector<double> major) {
  EvalReport rep;
  rep.kind = kind;
  rep.split_digest = "abc";
  for (std::size_t i = 0; i < sub.size(); ++i) rep.runs.push_back(fake_run(i, sub[i], major[i]));
  aggregate(rep);
  return rep;
}

}  // namespace

TEST(Accuracy, CountsEqualPositions) {
  auto gold = repeat("C-A1", 200);
  auto pred = gold;
  for (std::size_t i = 0; i < 15; ++i) pred[i * 13] = "C-A2";
  EXPECT_DOUBLE_EQ(accuracy(pred, gold), 0.925);
  EXPECT_THROW(accuracy(std::vector<std::string>{}, std::vector<std::string>{}),
               std::invalid_argument);
  EXPECT_THROW(accuracy(repeat("a", 2), repeat("a", 3)), std::invalid_argument);
}

TEST(Mismatch, CrossFieldSameMajor) {
  const auto tax = default_taxonomy();
  const std::vector<std::string> pred = {"F-A1"};
  const std::vector<std::string> gold = {"C-A1"};
  const auto m = mismatch_analysis(pred, gold, tax);
  EXPECT_EQ(m.subclass_mismatch, 1u);
  EXPECT_EQ(m.field_mismatch, 1u);
  EXPECT_EQ(m.major_name_mismatch, 0u);
  EXPECT_EQ(m.cross_field_same_major, 1u);
}

TEST(Mismatch, SameFieldDifferentMajor) {
  const auto tax = default_taxonomy();
  const std::vector<std::string> pred = {"C-B1", "C-A1"};
  const std::vector<std::string> gold = {"C-A1", "C-A1"};
  const auto m = mismatch_analysis(pred, gold, tax);
  EXPECT_EQ(m.n_test, 2u);
  EXPECT_EQ(m.subclass_mismatch, 1u);
  EXPECT_EQ(m.major_name_mismatch, 1u);
  EXPECT_EQ(m.field_mismatch, 0u);
  EXPECT_DOUBLE_EQ(m.subclass_rate(), 0.5);
}

TEST(Mismatch, UnknownCodeThrows) {
  const auto tax = default_taxonomy();
  EXPECT_THROW(mismatch_analysis(repeat("Z-Z9", 1), repeat("C-A1", 1), tax), CorpusError);
}

TEST(Mismatch, OrderingInvariantsOnRandomPairs) {
  const auto tax = default_taxonomy();
  const auto codes = tax.codes();
  CounterRng rng(99);
  std::vector<std::string> pred;
  std::vector<std::string> gold;
  for (int i = 0; i < 1000; ++i) {
    pred.push_back(codes[rng.below(codes.size())]);
    gold.push_back(codes[rng.below(codes.size())]);
    const auto m = mismatch_analysis(std::span(pred).last(1), std::span(gold).last(1), tax);
    EXPECT_LE(m.major_name_mismatch, m.subclass_mismatch);
    EXPECT_LE(m.field_mismatch, m.subclass_mismatch);
    EXPECT_LE(m.cross_field_same_major, m.field_mismatch);
    EXPECT_LE(m.field_mismatch, m.major_name_mismatch + m.cross_field_same_major);
    if (pred.back() == gold.back()) {
      EXPECT_EQ(m, (MismatchBreakdown{1, 0, 0, 0, 0}));
    }
  }
  const auto all = mismatch_analysis(pred, gold, tax);
  MismatchBreakdown summed;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    summed += mismatch_analysis(std::span(pred).subspan(i, 1), std::span(gold).subspan(i, 1), tax);
  }
  EXPECT_EQ(all, summed);
}

TEST(Confusion, TotalAndDiagonal) {
  const std::vector<std::string> gold = {"a", "a", "b", "c", "c"};
  const std::vector<std::string> pred = {"a", "b", "b", "a", "c"};
  const auto cm = confusion_matrix(pred, gold, {"a", "b", "c"});
  EXPECT_EQ(cm.total(), 5u);
  EXPECT_EQ(cm.diagonal(), 3u);
  EXPECT_EQ(cm.counts[0][1], 1u);
  EXPECT_EQ(cm.counts[2][0], 1u);
  EXPECT_DOUBLE_EQ(static_cast<double>(cm.diagonal()) / static_cast<double>(cm.total()),
                   accuracy(pred, gold));
}

TEST(Aggregate, SingleRunMeanIsTheRun) {
  const auto rep = fake_report(ModelKind::mlp, {0.8}, {0.9});
  EXPECT_EQ(rep.n_runs, 1u);
  EXPECT_DOUBLE_EQ(rep.mean_subclass_accuracy, 0.8);
  EXPECT_DOUBLE_EQ(rep.mean_major_accuracy, 0.9);
}

TEST(Aggregate, InvariantUnderRunPermutation) {
  auto rep = fake_report(ModelKind::cnn, {0.7, 0.8, 0.95, 0.6}, {0.9, 0.85, 1.0, 0.7});
  auto shuffled = rep;
  std::reverse(shuffled.runs.begin(), shuffled.runs.end());
  std::rotate(shuffled.runs.begin(), shuffled.runs.begin() + 1, shuffled.runs.end());
  aggregate(shuffled);
  EXPECT_EQ(report_to_json(shuffled).dump(), report_to_json(rep).dump());
  EXPECT_NEAR(rep.mean_subclass_accuracy, 0.7625, 1e-12);
  EXPECT_EQ(rep.pooled.subclass_mismatch, 0u + 1 + 2 + 3);
  EXPECT_EQ(rep.pooled_confusion.total(), 4 * 3u + 6);
}

TEST(Report, JsonRoundTripAndTimingSwitch) {
  auto rep = fake_report(ModelKind::rnn, {0.5, 0.6}, {0.7, 0.8});
  rep.total_seconds = 12.5;
  const auto j = report_to_json(rep);
  EXPECT_EQ(report_to_json(report_from_json(j)).dump(), j.dump());
  const auto det = report_to_json(rep, false).dump();
  EXPECT_EQ(det.find("seconds"), std::string::npos);
  EXPECT_EQ(det.find("latency"), std::string::npos);
}

TEST(Compare, RanksShareTies) {
  const std::vector<EvalReport> reports = {
      fake_report(ModelKind::rnn, {0.80}, {0.90}),
      fake_report(ModelKind::mlp, {0.92}, {0.90}),
      fake_report(ModelKind::cnn, {0.89}, {0.95}),
  };
  const auto cmp = compare_models(reports);
  ASSERT_EQ(cmp.rows.size(), 3u);
  EXPECT_EQ(cmp.rows[0].kind, ModelKind::mlp);
  EXPECT_EQ(cmp.rows[1].kind, ModelKind::cnn);
  EXPECT_EQ(cmp.rows[2].kind, ModelKind::rnn);
  EXPECT_EQ(cmp.rows[0].subclass_rank, 1u);
  EXPECT_EQ(cmp.rows[1].subclass_rank, 2u);
  EXPECT_EQ(cmp.rows[2].subclass_rank, 3u);
  EXPECT_EQ(cmp.rows[1].major_rank, 1u);
  EXPECT_EQ(cmp.rows[0].major_rank, 2u);
  EXPECT_EQ(cmp.rows[2].major_rank, 2u);
}

TEST(Compare, RejectsMismatchedReports) {
  auto a = fake_report(ModelKind::mlp, {0.9}, {0.9});
  auto b = fake_report(ModelKind::cnn, {0.9}, {0.9});
  b.split_digest = "other";
  EXPECT_THROW(compare_models(std::vector<EvalReport>{a, b}), std::invalid_argument);
  b = fake_report(ModelKind::cnn, {0.9, 0.8}, {0.9, 0.8});
  EXPECT_THROW(compare_models(std::vector<EvalReport>{a, b}), std::invalid_argument);
}

TEST(Compare, CsvLayout) {
  const std::vector<EvalReport> reports = {fake_report(ModelKind::mlp, {0.9, 0.8}, {1.0, 0.9}),
                                           fake_report(ModelKind::cnn, {0.7, 0.6}, {0.8, 0.7})};
  const auto cmp = compare_models(reports);
  std::ostringstream acc;
  write_accuracy_csv(acc, cmp);
  std::istringstream in(acc.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "model,level,mean,run1,run2");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  EXPECT_GE(rows, 4u);

  std::ostringstream mis;
  write_mismatch_csv(mis, cmp);
  EXPECT_EQ(mis.str().rfind("model,granularity,rate\n", 0), 0u);
}

TEST(RepeatedRuns, DeterministicAndSeedsPerRun) {
  const auto tax = default_taxonomy();
  SynthSpec spec;
  spec.keywords_per_subclass = 6;
  spec.tokens_per_doc = 10;
  spec.background_per_field = 8;
  spec.train_per_subclass = 5;
  spec.test_per_subclass = 2;
  const auto split = stratified_split(generate_synthetic(spec, tax),
                                      synthetic_test_counts(spec, tax), 5);
  ModelConfig cfg;
  cfg.epochs = 3;
  cfg.hidden1 = 16;
  cfg.hidden2 = 8;
  const auto a = repeated_runs(split, tax, cfg, 2, 42);
  const auto b = repeated_runs(split, tax, cfg, 2, 42);
  EXPECT_EQ(report_to_json(a, false).dump(), report_to_json(b, false).dump());
  ASSERT_EQ(a.runs.size(), 2u);
  EXPECT_EQ(a.runs[0].seed, mix_seed(42, 0));
  EXPECT_EQ(a.runs[1].seed, mix_seed(42, 1));
  EXPECT_EQ(a.n_test, split.test.size());
  EXPECT_EQ(a.pooled.n_test, 2 * split.test.size());
  EXPECT_EQ(a.split_digest, split_digest(split));
  EXPECT_THROW(repeated_runs(split, tax, cfg, 0, 42), std::invalid_argument);
}
