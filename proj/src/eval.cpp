/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/eval.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "faultclass/digest.hpp"
#include "faultclass/numfmt.hpp"
#include "faultclass/rng.hpp"
#include "faultclass/serialize.hpp"

namespace faultclass {

using nlohmann::json;

double accuracy(std::span<const std::string> predicted, std::span<const std::string> gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("accuracy: prediction and gold lists differ in length");
  }
  if (gold.empty()) throw std::invalid_argument("accuracy: empty label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

MismatchBreakdown& MismatchBreakdown::operator+=(const MismatchBreakdown& other) {
  n_test += other.n_test;
  subclass_mismatch += other.subclass_mismatch;
  major_name_mismatch += other.major_name_mismatch;
  field_mismatch += other.field_mismatch;
  cross_field_same_major += other.cross_field_same_major;
  return *this;
}

MismatchBreakdown mismatch_analysis(std::span<const std::string> predicted,
                                    std::span<const std::string> gold, const Taxonomy& taxonomy) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("mismatch_analysis: prediction and gold lists differ in length");
  }
  MismatchBreakdown b;
  b.n_test = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = taxonomy.at(predicted[i]);
    const auto& g = taxonomy.at(gold[i]);
    const bool field_differs = p.field != g.field;
    const bool major_differs = p.major != g.major;
    b.subclass_mismatch += p.code != g.code ? 1 : 0;
    b.field_mismatch += field_differs ? 1 : 0;
    b.major_name_mismatch += major_differs ? 1 : 0;
    b.cross_field_same_major += field_differs && !major_differs ? 1 : 0;
  }
  return b;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::size_t ConfusionMatrix::diagonal() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (codes.empty() && counts.empty()) {
    *this = other;
    return *this;
  }
  if (codes != other.codes) throw std::invalid_argument("confusion matrices over different codes");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t j = 0; j < counts[i].size(); ++j) counts[i][j] += other.counts[i][j];
  }
  return *this;
}

ConfusionMatrix confusion_matrix(std::span<const std::string> predicted,
                                 std::span<const std::string> gold,
                                 std::vector<std::string> codes) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("confusion_matrix: prediction and gold lists differ in length");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < codes.size(); ++i) index.emplace(codes[i], i);
  ConfusionMatrix m{std::move(codes), {}};
  m.counts.assign(m.codes.size(), std::vector<std::size_t>(m.codes.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = index.find(gold[i]);
    const auto p = index.find(predicted[i]);
    if (g == index.end() || p == index.end()) {
      throw std::invalid_argument("confusion_matrix: label outside the code list");
    }
    ++m.counts[g->second][p->second];
  }
  return m;
}

std::string split_digest(const CorpusSplit& split) {
  std::string buf;
  for (const auto& c : split.train) buf += c.id + '\n';
  buf += "--\n";
  for (const auto& c : split.test) buf += c.id + '\n';
  return sha256_hex(buf);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double mean_of(const std::vector<double>& values) {
  double total = 0.0;
  for (auto v : values) total += v;
  return values.empty() ? 0.0 : total / static_cast<double>(values.size());
}

}  // namespace

void aggregate(EvalReport& report) {
  std::sort(report.runs.begin(), report.runs.end(),
            [](const RunResult& a, const RunResult& b) { return a.run < b.run; });
  report.n_runs = report.runs.size();
  std::vector<double> sub;
  std::vector<double> major;
  std::vector<double> major_model;
  std::vector<double> latency;
  report.pooled = {};
  report.pooled_confusion = {};
  report.max_latency_s = 0.0;
  for (const auto& r : report.runs) {
    sub.push_back(r.subclass_accuracy);
    major.push_back(r.major_accuracy);
    if (r.major_model_accuracy) major_model.push_back(*r.major_model_accuracy);
    latency.push_back(r.mean_latency_s);
    report.pooled += r.mismatch;
    report.pooled_confusion += r.confusion;
    report.max_latency_s = std::max(report.max_latency_s, r.max_latency_s);
  }
  report.mean_subclass_accuracy = mean_of(sub);
  report.mean_major_accuracy = mean_of(major);
  report.mean_major_model_accuracy.reset();
  if (!major_model.empty() && major_model.size() == report.runs.size()) {
    report.mean_major_model_accuracy = mean_of(major_model);
  }
  report.mean_latency_s = mean_of(latency);
}

EvalReport repeated_runs(const CorpusSplit& split, const Taxonomy& taxonomy, ModelConfig config,
                         std::size_t n_runs, std::uint64_t master_seed,
                         const EvalOptions& options) {
  if (n_runs == 0) throw std::invalid_argument("n_runs must be >= 1");
  if (split.test.empty()) throw std::invalid_argument("evaluation needs a non-empty test split");
  const auto start = std::chrono::steady_clock::now();
  config.level = LabelLevel::subclass;

  EvalReport report;
  report.kind = config.kind;
  report.config = config;
  report.master_seed = master_seed;
  report.split_digest = split_digest(split);
  report.n_train = split.train.size();
  report.n_test = split.test.size();

  std::vector<std::string> gold;
  std::vector<std::string> gold_major;
  std::set<std::string> seen_codes;
  for (const auto& c : split.test) {
    gold.push_back(c.subclass);
    gold_major.push_back(taxonomy.major_of(c.subclass));
  }
  const auto codes = taxonomy.codes();

  for (std::size_t i = 0; i < n_runs; ++i) {
    RunResult run;
    run.run = i;
    run.seed = mix_seed(master_seed, i);
    ModelConfig run_config = config;
    run_config.seed = run.seed;

    const auto train_start = std::chrono::steady_clock::now();
    Model model = fit(run_config, split.train, taxonomy, split.test);
    run.train_seconds = seconds_since(train_start);

    std::vector<std::string> predicted;
    std::vector<std::string> predicted_major;
    double latency_total = 0.0;
    for (const auto& c : split.test) {
      auto p = predict(model, c.text);
      latency_total += p.latency_s;
      run.max_latency_s = std::max(run.max_latency_s, p.latency_s);
      predicted_major.push_back(taxonomy.major_of(p.label));
      predicted.push_back(std::move(p.label));
    }
    run.mean_latency_s = latency_total / static_cast<double>(split.test.size());
    run.subclass_accuracy = accuracy(predicted, gold);
    run.major_accuracy = accuracy(predicted_major, gold_major);
    run.mismatch = mismatch_analysis(predicted, gold, taxonomy);
    run.confusion = confusion_matrix(predicted, gold, codes);
    run.history = model.history();
    run.checkpoint_sha256 = sha256_hex(serialize_checkpoint(model));

    if (options.with_major_model) {
      ModelConfig major_config = run_config;
      major_config.level = LabelLevel::major;
      const Model major_model = fit(major_config, split.train, taxonomy, split.test);
      std::vector<std::string> direct;
      for (const auto& c : split.test) direct.push_back(predict(major_model, c.text).label);
      run.major_model_accuracy = accuracy(direct, gold_major);
    }
    if (options.progress) {
      options.progress(std::string(to_string(config.kind)) + " run " + std::to_string(i + 1) +
                       "/" + std::to_string(n_runs) + ": subclass " +
                       format_double(run.subclass_accuracy) + ", major " +
                       format_double(run.major_accuracy) + ", " +
                       format_double(run.train_seconds) + " s");
    }
    if (options.models_out != nullptr) options.models_out->push_back(std::move(model));
    report.runs.push_back(std::move(run));
  }
  aggregate(report);
  report.total_seconds = seconds_since(start);
  return report;
}

namespace {

json breakdown_to_json(const MismatchBreakdown& b) {
  return {{"n_test", b.n_test},
          {"subclass_mismatch", b.subclass_mismatch},
          {"major_name_mismatch", b.major_name_mismatch},
          {"field_mismatch", b.field_mismatch},
          {"cross_field_same_major", b.cross_field_same_major},
          {"subclass_rate", b.subclass_rate()},
          {"major_rate", b.major_rate()},
          {"field_rate", b.field_rate()},
          {"cross_field_same_major_rate", b.cross_field_same_major_rate()}};
}

MismatchBreakdown breakdown_from_json(const json& j) {
  MismatchBreakdown b;
  b.n_test = j.at("n_test").get<std::size_t>();
  b.subclass_mismatch = j.at("subclass_mismatch").get<std::size_t>();
  b.major_name_mismatch = j.at("major_name_mismatch").get<std::size_t>();
  b.field_mismatch = j.at("field_mismatch").get<std::size_t>();
  b.cross_field_same_major = j.at("cross_field_same_major").get<std::size_t>();
  return b;
}

json confusion_to_json(const ConfusionMatrix& m) {
  return {{"codes", m.codes}, {"counts", m.counts}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  return {j.at("codes").get<std::vector<std::string>>(),
          j.at("counts").get<std::vector<std::vector<std::size_t>>>()};
}

}  // namespace

json report_to_json(const EvalReport& report, bool include_timings) {
  json runs = json::array();
  for (const auto& r : report.runs) {
    json jr = {{"run", r.run},
               {"seed", r.seed},
               {"subclass_accuracy", r.subclass_accuracy},
               {"major_accuracy", r.major_accuracy},
               {"mismatch", breakdown_to_json(r.mismatch)},
               {"confusion", confusion_to_json(r.confusion)},
               {"history", r.history},
               {"checkpoint_sha256", r.checkpoint_sha256}};
    if (r.major_model_accuracy) jr["major_model_accuracy"] = *r.major_model_accuracy;
    if (include_timings) {
      jr["timings"] = {{"train_seconds", r.train_seconds},
                       {"mean_latency_s", r.mean_latency_s},
                       {"max_latency_s", r.max_latency_s}};
    }
    runs.push_back(std::move(jr));
  }
  json mean = {{"subclass_accuracy", report.mean_subclass_accuracy},
               {"major_accuracy", report.mean_major_accuracy}};
  if (report.mean_major_model_accuracy) {
    mean["major_model_accuracy"] = *report.mean_major_model_accuracy;
  }
  json j = {{"kind", std::string(to_string(report.kind))},
            {"config", config_to_json(report.config)},
            {"n_runs", report.n_runs},
            {"master_seed", report.master_seed},
            {"split",
             {{"digest", report.split_digest},
              {"n_train", report.n_train},
              {"n_test", report.n_test}}},
            {"mean", mean},
            {"pooled_mismatch", breakdown_to_json(report.pooled)},
            {"pooled_confusion", confusion_to_json(report.pooled_confusion)},
            {"runs", runs}};
  if (include_timings) {
    j["timings"] = {{"total_seconds", report.total_seconds},
                    {"mean_latency_s", report.mean_latency_s},
                    {"max_latency_s", report.max_latency_s}};
  }
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport report;
  try {
    report.kind = parse_model_kind(j.at("kind").get<std::string>());
    report.config = config_from_json(j.at("config"));
    report.master_seed = j.at("master_seed").get<std::uint64_t>();
    report.split_digest = j.at("split").at("digest").get<std::string>();
    report.n_train = j.at("split").at("n_train").get<std::size_t>();
    report.n_test = j.at("split").at("n_test").get<std::size_t>();
    for (const auto& jr : j.at("runs")) {
      RunResult r;
      r.run = jr.at("run").get<std::size_t>();
      r.seed = jr.at("seed").get<std::uint64_t>();
      r.subclass_accuracy = jr.at("subclass_accuracy").get<double>();
      r.major_accuracy = jr.at("major_accuracy").get<double>();
      if (jr.contains("major_model_accuracy")) {
        r.major_model_accuracy = jr.at("major_model_accuracy").get<double>();
      }
      r.mismatch = breakdown_from_json(jr.at("mismatch"));
      r.confusion = confusion_from_json(jr.at("confusion"));
      r.history = jr.at("history").get<std::vector<double>>();
      r.checkpoint_sha256 = jr.at("checkpoint_sha256").get<std::string>();
      if (jr.contains("timings")) {
        const auto& t = jr.at("timings");
        r.train_seconds = t.at("train_seconds").get<double>();
        r.mean_latency_s = t.at("mean_latency_s").get<double>();
        r.max_latency_s = t.at("max_latency_s").get<double>();
      }
      report.runs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed evaluation report: ") + e.what());
  }
  aggregate(report);
  if (j.contains("timings")) report.total_seconds = j["timings"].value("total_seconds", 0.0);
  if (report.n_runs != j.value("n_runs", report.n_runs)) {
    throw std::invalid_argument("evaluation report n_runs disagrees with its runs");
  }
  return report;
}

Comparison compare_models(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("compare_models needs at least one report");
  Comparison cmp;
  cmp.n_runs = reports[0].n_runs;
  cmp.split_digest = reports[0].split_digest;
  for (const auto& r : reports) {
    if (r.split_digest != cmp.split_digest) {
      throw std::invalid_argument("reports were produced on different splits");
    }
    if (r.n_runs != cmp.n_runs) throw std::invalid_argument("reports differ in run count");
    ComparisonRow row;
    row.kind = r.kind;
    row.mean_subclass_accuracy = r.mean_subclass_accuracy;
    row.mean_major_accuracy = r.mean_major_accuracy;
    row.mean_major_model_accuracy = r.mean_major_model_accuracy;
    for (const auto& run : r.runs) {
      row.run_subclass_accuracy.push_back(run.subclass_accuracy);
      row.run_major_accuracy.push_back(run.major_accuracy);
      if (run.major_model_accuracy) row.run_major_model_accuracy.push_back(*run.major_model_accuracy);
    }
    row.pooled = r.pooled;
    cmp.rows.push_back(std::move(row));
  }
  std::stable_sort(cmp.rows.begin(), cmp.rows.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  for (auto& row : cmp.rows) {
    row.subclass_rank = 1;
    row.major_rank = 1;
    for (const auto& other : cmp.rows) {
      if (other.mean_subclass_accuracy > row.mean_subclass_accuracy) ++row.subclass_rank;
      if (other.mean_major_accuracy > row.mean_major_accuracy) ++row.major_rank;
    }
  }
  return cmp;
}

json comparison_to_json(const Comparison& comparison) {
  json rows = json::array();
  for (const auto& r : comparison.rows) {
    json jr = {{"model", std::string(to_string(r.kind))},
               {"mean_subclass_accuracy", r.mean_subclass_accuracy},
               {"mean_major_accuracy", r.mean_major_accuracy},
               {"subclass_rank", r.subclass_rank},
               {"major_rank", r.major_rank},
               {"runs",
                {{"subclass_accuracy", r.run_subclass_accuracy},
                 {"major_accuracy", r.run_major_accuracy}}},
               {"mismatch_rates",
                {{"field", r.pooled.field_rate()},
                 {"major", r.pooled.major_rate()},
                 {"subclass", r.pooled.subclass_rate()},
                 {"cross_field_same_major", r.pooled.cross_field_same_major_rate()}}}};
    if (r.mean_major_model_accuracy) {
      jr["mean_major_model_accuracy"] = *r.mean_major_model_accuracy;
      jr["runs"]["major_model_accuracy"] = r.run_major_model_accuracy;
    }
    rows.push_back(std::move(jr));
  }
  return {{"n_runs", comparison.n_runs}, {"split_digest", comparison.split_digest}, {"rows", rows}};
}

void write_accuracy_csv(std::ostream& out, const Comparison& comparison) {
  out << "model,level,mean";
  for (std::size_t i = 1; i <= comparison.n_runs; ++i) out << ",run" << i;
  out << '\n';
  const auto emit = [&](const ComparisonRow& r, const char* level, double mean,
                        const std::vector<double>& runs) {
    out << to_string(r.kind) << ',' << level << ',' << format_double(mean);
    for (auto v : runs) out << ',' << format_double(v);
    out << '\n';
  };
  for (const auto& r : comparison.rows) {
    emit(r, "major", r.mean_major_accuracy, r.run_major_accuracy);
    emit(r, "subclass", r.mean_subclass_accuracy, r.run_subclass_accuracy);
    if (r.mean_major_model_accuracy) {
      emit(r, "major_model", *r.mean_major_model_accuracy, r.run_major_model_accuracy);
    }
  }
}

void write_mismatch_csv(std::ostream& out, const Comparison& comparison) {
  out << "model,granularity,rate\n";
  for (const auto& r : comparison.rows) {
    const auto kind = to_string(r.kind);
    out << kind << ",field," << format_double(r.pooled.field_rate()) << '\n';
    out << kind << ",major," << format_double(r.pooled.major_rate()) << '\n';
    out << kind << ",subclass," << format_double(r.pooled.subclass_rate()) << '\n';
    out << kind << ",cross_field_same_major,"
        << format_double(r.pooled.cross_field_same_major_rate()) << '\n';
  }
}

}  // namespace faultclass
