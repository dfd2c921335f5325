/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "faultclass/digest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() {
    static const fs::path d = [] {
      auto p = fs::temp_directory_path() / "faultclass_cli_test";
      fs::remove_all(p);
      fs::create_directories(p);
      return p;
    }();
    return d;
  }

  static Result run(const std::string& args) {
    const auto out = dir() / "stdout.txt";
    const auto err = dir() / "stderr.txt";
    const std::string cmd = std::string(FAULTCLASS_CLI) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  static std::string path(const std::string& name) { return (dir() / name).string(); }

  static constexpr const char* kSmallSynth =
      " --k 6 --l 10 --background 8 --train-per-class 5 --test-per-class 2 --seed 3";
  static constexpr const char* kFastModel =
      " --epochs 2 --hidden1 16 --hidden2 8 --split-test-per-class 2";

  static const std::string& corpus() {
    static const std::string p = [] {
      const auto r = run("synth --out " + path("corpus.jsonl") + kSmallSynth);
      EXPECT_EQ(r.code, 0) << r.err;
      return path("corpus.jsonl");
    }();
    return p;
  }

  static const std::string& checkpoint() {
    static const std::string p = [] {
      const auto r = run("train --model mlp --corpus " + corpus() + kFastModel + " --out " +
                         path("mlp.json"));
      EXPECT_EQ(r.code, 0) << r.err;
      return path("mlp.json");
    }();
    return p;
  }
};

}  // namespace

TEST_F(Cli, SynthIsReproducibleAndWritesManifest) {
  ASSERT_EQ(run("synth --out " + path("again.jsonl") + kSmallSynth).code, 0);
  EXPECT_EQ(slurp(corpus()), slurp(path("again.jsonl")));
  const auto manifest = json::parse(slurp(path("again.jsonl.manifest.json")));
  for (const char* key : {"command_line", "config", "input_sha256", "master_seed", "tool_version",
                          "started_at", "finished_at"}) {
    EXPECT_TRUE(manifest.contains(key)) << key;
  }
}

TEST_F(Cli, BadFlagValuesExitTwo) {
  auto r = run("synth --out " + path("x.jsonl") + " --p 1.5");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--p"), std::string::npos) << r.err;
  r = run("train --model xnn --corpus " + corpus() + " --out " + path("x.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--model"), std::string::npos) << r.err;
  r = run("evaluate --model mlp --runs 0 --corpus " + corpus());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--runs"), std::string::npos) << r.err;
  EXPECT_EQ(run("train --model mlp --corpus /nonexistent.jsonl --out " + path("x.json")).code, 2);
  EXPECT_EQ(run("predict --checkpoint " + path("missing.json") + " --text hi").code, 2);
  EXPECT_EQ(run("bogus").code, 2);
}

TEST_F(Cli, TrainingTwiceGivesIdenticalCheckpoints) {
  ASSERT_EQ(run("train --model mlp --corpus " + corpus() + kFastModel + " --out " +
                path("mlp2.json"))
                .code,
            0);
  EXPECT_EQ(faultclass::sha256_file(checkpoint()), faultclass::sha256_file(path("mlp2.json")));
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  std::ofstream(path("cfg.json")) << R"({"epochs": 9, "hidden1": 16, "hidden2": 8})";
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --model mlp --corpus " + corpus() +
                " --epochs 2 --split-test-per-class 2 --out " + path("mlp_cfg.json"))
                .code,
            0);
  EXPECT_EQ(faultclass::sha256_file(checkpoint()), faultclass::sha256_file(path("mlp_cfg.json")));
}

TEST_F(Cli, PredictTextAndInputFile) {
  auto r = run("predict --checkpoint " + checkpoint() + " --text 'service outage at night'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto one = json::parse(r.out);
  EXPECT_TRUE(one.contains("label"));
  EXPECT_TRUE(one.contains("latency_s"));
  double total = 0;
  for (const auto& [label, p] : one["probs"].items()) total += p.get<double>();
  EXPECT_NEAR(total, 1.0, 1e-9);

  std::ofstream(path("queries.txt")) << "first query\nsecond one\n\n";
  r = run("predict --checkpoint " + checkpoint() + " --input " + path("queries.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    EXPECT_TRUE(json::parse(line).contains("label"));
    ++n;
  }
  EXPECT_EQ(n, 3u);
  EXPECT_EQ(run("predict --checkpoint " + checkpoint()).code, 2);
}

TEST_F(Cli, EvaluateAndCompare) {
  for (const char* model : {"mlp", "cnn"}) {
    const auto r = run(std::string("evaluate --runs 1 --model ") + model + " --corpus " + corpus() +
                       kFastModel + " --embedding-dim 8 --w2v-epochs 1 --feature-maps 4" +
                       " --out " + path(std::string(model) + "_report.json"));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  auto r = run("compare --reports " + path("mlp_report.json") + " " + path("cnn_report.json") +
               " --out-dir " + path("cmp"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("cmp/comparison.json")));
  EXPECT_EQ(slurp(path("cmp/accuracy.csv")).rfind("model,level,mean,run1", 0), 0u);
  EXPECT_TRUE(fs::exists(path("cmp/mismatch.csv")));

  r = run("evaluate --runs 1 --model mlp --corpus " + corpus() +
          " --epochs 2 --hidden1 16 --hidden2 8 --split-test-per-class 1 --out " +
          path("other_split.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("compare --reports " + path("mlp_report.json") + " " + path("other_split.json") +
          " --out-dir " + path("cmp2"));
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, EmbeddingsNeedWordVectors) {
  EXPECT_EQ(run("embeddings --checkpoint " + checkpoint()).code, 2);
}

TEST_F(Cli, SelfcheckPassesAndCatchesCorruption) {
  auto r = run("selfcheck --seeds 2");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("selfcheck passed"), std::string::npos);
  r = run("selfcheck --seeds 2 --corrupt-gradient");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}
