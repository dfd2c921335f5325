/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "faultclass/adam.hpp"
#include "faultclass/models.hpp"

using namespace faultclass;

namespace {

struct SmallCorpus {
  Taxonomy taxonomy = default_taxonomy();
  CorpusSplit split;

  SmallCorpus() {
    SynthSpec spec;
    spec.keywords_per_subclass = 8;
    spec.tokens_per_doc = 12;
    spec.background_per_field = 10;
    spec.train_per_subclass = 6;
    spec.test_per_subclass = 2;
    const auto cases = generate_synthetic(spec, taxonomy);
    split = stratified_split(cases, synthetic_test_counts(spec, taxonomy), 3);
  }
};

const SmallCorpus& corpus() {
  static const SmallCorpus c;
  return c;
}

ModelConfig small_config(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.dropout = 0.2;
  cfg.hidden1 = 24;
  cfg.hidden2 = 12;
  cfg.filter_widths = {2, 3};
  cfg.feature_maps = 6;
  cfg.lstm_hidden = 8;
  cfg.max_len = 16;
  cfg.skipgram.dim = 8;
  cfg.skipgram.epochs = 2;
  return cfg;
}

class PerKind : public ::testing::TestWithParam<ModelKind> {};

std::string kind_name(const ::testing::TestParamInfo<ModelKind>& info) {
  return std::string(to_string(info.param));
}

}  // namespace

TEST(ModelConfig, ParseNames) {
  EXPECT_EQ(parse_model_kind("cnn"), ModelKind::cnn);
  EXPECT_EQ(parse_label_level("major"), LabelLevel::major);
  EXPECT_THROW(parse_model_kind("xnn"), std::invalid_argument);
  EXPECT_THROW(parse_label_level("field"), std::invalid_argument);
}

TEST(ModelConfig, RejectsEmptyFilterBank) {
  auto cfg = small_config(ModelKind::cnn);
  cfg.feature_maps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config(ModelKind::cnn);
  cfg.filter_widths.clear();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config(ModelKind::mlp);
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Model, MlpParameterCount) {
  std::vector<std::string> tokens;
  for (int i = 0; i < 998; ++i) tokens.push_back("t" + std::to_string(i));
  FeaturePipeline pipeline;
  pipeline.vocab = Vocabulary::from_tokens(tokens, std::vector<std::size_t>(998, 1));
  pipeline.tfidf = fit_tfidf(std::vector<TokenList>{tokens}, pipeline.vocab);
  std::vector<std::string> labels;
  for (int i = 0; i < 16; ++i) labels.push_back("L" + std::to_string(i));
  const auto model = Model::build(ModelConfig{}, labels, pipeline);
  EXPECT_EQ(model.parameter_count(), 1000u * 256 + 256 + 256 * 64 + 64 + 64 * 16 + 16);
}

TEST(Model, BuildRejectsMismatchedPipeline) {
  const auto& c = corpus();
  const auto pipeline = fit_pipeline(small_config(ModelKind::mlp), c.split.train);
  EXPECT_THROW(Model::build(small_config(ModelKind::cnn), {"a", "b"}, pipeline), ModelError);
}

TEST_P(PerKind, SameSeedSameInit) {
  const auto& c = corpus();
  const auto cfg = small_config(GetParam());
  const auto pipeline = fit_pipeline(cfg, c.split.train);
  const auto a = Model::build(cfg, {"a", "b", "c"}, pipeline);
  const auto b = Model::build(cfg, {"a", "b", "c"}, pipeline);
  EXPECT_EQ(a.parameters(), b.parameters());
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(a.parameters(), Model::build(other, {"a", "b", "c"}, pipeline).parameters());
}

TEST_P(PerKind, TrainingIsDeterministicAndLossDrops) {
  const auto& c = corpus();
  const auto cfg = small_config(GetParam());
  const auto a = fit(cfg, c.split.train, c.taxonomy);
  const auto b = fit(cfg, c.split.train, c.taxonomy);
  ASSERT_EQ(a.history().size(), cfg.epochs);
  EXPECT_LT(a.history().back(), a.history().front());
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
}

TEST_P(PerKind, PredictionIsDistribution) {
  const auto& c = corpus();
  const auto model = fit(small_config(GetParam()), c.split.train, c.taxonomy);
  for (const std::string& text : std::vector<std::string>{"", "   ", "entirely unseen words here", c.split.test[0].text}) {
    const auto p = predict(model, text);
    ASSERT_EQ(p.probs.size(), model.labels().size());
    EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-9);
    const auto best = std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin();
    EXPECT_EQ(p.label, model.labels()[static_cast<std::size_t>(best)]);
    EXPECT_GE(p.latency_s, 0.0);
  }
}

TEST_P(PerKind, CheckpointRoundTrip) {
  const auto& c = corpus();
  const auto model = fit(small_config(GetParam()), c.split.train, c.taxonomy);
  const auto text = serialize_checkpoint(model);
  const auto back = deserialize_checkpoint(text, GetParam());
  EXPECT_EQ(serialize_checkpoint(back), text);
  for (const auto& doc : c.split.test) {
    EXPECT_EQ(predict(back, doc.text).probs, predict(model, doc.text).probs);
  }

  const auto path = std::filesystem::temp_directory_path() /
                    ("faultclass_ckpt_" + std::string(to_string(GetParam())) + ".json");
  save_checkpoint(model, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), text);
  std::filesystem::remove(path);
}

INSTANTIATE_TEST_SUITE_P(Kinds, PerKind,
                         ::testing::Values(ModelKind::mlp, ModelKind::cnn, ModelKind::rnn),
                         kind_name);

TEST(Model, MlpLearnsTrainingSet) {
  const auto& c = corpus();
  auto cfg = small_config(ModelKind::mlp);
  cfg.epochs = 30;
  const auto model = fit(cfg, c.split.train, c.taxonomy);
  const double chance = 1.0 / static_cast<double>(model.labels().size());
  for (const auto& doc : c.split.train) {
    const auto p = predict(model, doc.text);
    EXPECT_EQ(p.label, doc.subclass);
    EXPECT_GT(p.probs[*model.label_index(doc.subclass)], chance);
  }
}

TEST(Model, SingleFullBatchEpochEqualsOneAdamStep) {
  const auto& c = corpus();
  auto cfg = small_config(ModelKind::mlp);
  cfg.epochs = 1;
  cfg.batch_size = c.split.train.size();
  cfg.dropout = 0.0;
  const auto trained = fit(cfg, c.split.train, c.taxonomy);

  auto fresh = Model::build(cfg, trained.labels(), fit_pipeline(cfg, c.split.train));
  std::vector<Features> features;
  std::vector<std::size_t> labels;
  for (const auto& doc : c.split.train) {
    features.push_back(fresh.featurize(doc.text));
    labels.push_back(*fresh.label_index(doc.subclass));
  }
  std::vector<const Features*> batch;
  for (const auto& f : features) batch.push_back(&f);
  std::vector<nn::Tensor> values;
  for (const auto& p : fresh.parameters()) values.push_back(p.value);

  nn::Tape tape;
  std::vector<nn::Var> vars;
  for (const auto& v : values) vars.push_back(tape.parameter(v));
  CounterRng rng(0);
  const auto loss = batch_loss(fresh, tape, vars, batch, labels, nn::Mode::train, rng);
  tape.backward(loss);
  std::vector<nn::Tensor> grads;
  for (const auto& v : vars) grads.push_back(tape.grad(v));
  auto adam = nn::AdamState::for_params(values, {cfg.learning_rate});
  nn::adam_step(values, grads, adam);

  EXPECT_NEAR(trained.history()[0], tape.value(loss).item(), 1e-12);
  ASSERT_EQ(values.size(), trained.parameters().size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto& got = trained.parameters()[k].value;
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], values[k][i], 1e-9);
  }
}

TEST(Model, TrainRejectsDegenerateSets) {
  const auto& c = corpus();
  const auto cfg = small_config(ModelKind::mlp);
  const std::vector<FailureCase> one_class(c.split.train.begin(), c.split.train.begin() + 3);
  EXPECT_THROW(fit(cfg, one_class, c.taxonomy), ModelError);
  EXPECT_THROW(fit(cfg, std::vector<FailureCase>{}, c.taxonomy), ModelError);
}

TEST(Checkpoint, DetectsCorruptionAndKindMismatch) {
  const auto& c = corpus();
  const auto model = fit(small_config(ModelKind::cnn), c.split.train, c.taxonomy);
  const auto text = serialize_checkpoint(model);

  auto tampered = text;
  const auto at = tampered.find(model.labels()[0]);
  ASSERT_NE(at, std::string::npos);
  tampered[at + 3] = tampered[at + 3] == '1' ? '2' : '1';
  try {
    deserialize_checkpoint(tampered);
    FAIL() << "tampered checkpoint accepted";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.reason(), CheckpointError::Reason::checksum);
  }

  try {
    deserialize_checkpoint(text, ModelKind::mlp);
    FAIL() << "kind mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.reason(), CheckpointError::Reason::kind_mismatch);
  }

  try {
    deserialize_checkpoint("{not json");
    FAIL() << "garbage accepted";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.reason(), CheckpointError::Reason::parse);
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), CheckpointError);
}

TEST(Labels, MajorLevelUsesMajorClass) {
  const auto& tax = corpus().taxonomy;
  const FailureCase fc{"x", "t", "C-A2"};
  EXPECT_EQ(label_of(fc, LabelLevel::subclass, tax), "C-A2");
  EXPECT_EQ(label_of(fc, LabelLevel::major, tax), tax.major_of("C-A2"));
}
