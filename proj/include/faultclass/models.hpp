/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "faultclass/autodiff.hpp"
#include "faultclass/corpus.hpp"
#include "faultclass/embedding.hpp"
#include "faultclass/tensor.hpp"
#include "faultclass/text.hpp"

namespace faultclass {

enum class ModelKind { mlp, cnn, rnn };
enum class LabelLevel { major, subclass };

std::string_view to_string(ModelKind kind);
std::string_view to_string(LabelLevel level);
/// Throw std::invalid_argument for unknown names.
ModelKind parse_model_kind(std::string_view name);
LabelLevel parse_label_level(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  LabelLevel level = LabelLevel::subclass;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;  // Adam
  double dropout = 0.5;

  // mlp
  std::size_t hidden1 = 256;
  std::size_t hidden2 = 64;
  // cnn
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t feature_maps = 50;
  // rnn
  std::size_t lstm_hidden = 64;

  // features
  TokenizerMode tokenizer = TokenizerMode::whitespace();
  std::size_t min_count = 1;
  std::size_t max_len = 64;
  bool tfidf_fit_all = false;
  SkipGramConfig skipgram;  // its seed is replaced by one derived from `seed`

  /// Throws std::invalid_argument naming the bad field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Fitted text features. mlp models carry `tfidf`; cnn/rnn models carry the
/// word2vec matrix used to initialize their embedding layer (absent once a
/// model has been loaded from a checkpoint, where the tuned table is a
/// parameter).
struct FeaturePipeline {
  Vocabulary vocab;
  std::optional<TfIdfModel> tfidf;
  std::optional<EmbeddingMatrix> initial_embeddings;
};

/// Input of one document after featurization.
using Features = std::variant<std::vector<double>, EncodedSequence>;

struct NamedTensor {
  std::string name;
  nn::Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One of the three classifiers with its label list, feature state and
/// parameters. Immutable once trained; predict() is safe to call
/// concurrently.
///
///   mlp: tfidf(V) -> dense(H1) -> ReLU -> dropout -> dense(H2) -> ReLU
///        -> dropout -> dense(C)
///   cnn: embedding -> conv widths x F maps -> ReLU -> max over time
///        -> concat -> dropout -> dense(C)
///   rnn: embedding -> LSTM(H) -> ReLU -> dropout -> dense(C)
class Model {
 public:
  /// Fresh parameters drawn from config.seed. Throws ModelError when the
  /// pipeline does not match the kind, std::invalid_argument for a bad config.
  static Model build(ModelConfig config, std::vector<std::string> labels,
                     FeaturePipeline pipeline);

  /// Reassembles a model from stored state, validating parameter shapes.
  static Model from_parts(ModelConfig config, std::vector<std::string> labels,
                          FeaturePipeline pipeline, std::vector<NamedTensor> params,
                          std::vector<double> history);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const FeaturePipeline& pipeline() const noexcept { return pipeline_; }
  const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  std::vector<NamedTensor>& mutable_parameters() noexcept { return params_; }
  const std::vector<double>& history() const noexcept { return history_; }
  std::size_t parameter_count() const;
  std::optional<std::size_t> label_index(std::string_view label) const;

  Features featurize(std::string_view text) const;
  Features featurize_tokens(std::span<const std::string> tokens) const;

  /// Forward pass for a batch; `params` are tape leaves for parameters()
  /// in order. Returns [B x C] logits.
  nn::Var logits(nn::Tape& tape, std::span<const nn::Var> params,
                 std::span<const Features* const> batch, nn::Mode mode, CounterRng& rng) const;

  void set_history(std::vector<double> history) { history_ = std::move(history); }

 private:
  Model() = default;
  std::vector<nn::Shape> expected_shapes() const;

  ModelConfig config_;
  std::vector<std::string> labels_;
  FeaturePipeline pipeline_;
  std::vector<NamedTensor> params_;
  std::vector<double> history_;
};

/// Gold label of a case at `level`: the subclass code or its major class name.
std::string label_of(const FailureCase& c, LabelLevel level, const Taxonomy& taxonomy);

/// Tokenizes, builds the vocabulary and fits TF-IDF (mlp) or skip-gram
/// embeddings (cnn/rnn) on the training texts, plus `unlabeled` texts when
/// config.tfidf_fit_all is set for an mlp.
FeaturePipeline fit_pipeline(const ModelConfig& config, std::span<const FailureCase> train,
                             std::span<const FailureCase> unlabeled = {});

/// Mini-batch Adam over epochs shuffled from config.seed with dropout
/// active. Records the mean loss of every epoch. Throws ModelError for an
/// empty or single-class training set, or labels unknown to the model.
Model train(Model model, std::span<const FailureCase> cases, const Taxonomy& taxonomy);

/// fit_pipeline + build (labels from `cases`) + train.
Model fit(const ModelConfig& config, std::span<const FailureCase> cases, const Taxonomy& taxonomy,
          std::span<const FailureCase> unlabeled = {});

/// Mean cross-entropy over `batch` with the given parameter values; the
/// scalar that training differentiates.
nn::Var batch_loss(const Model& model, nn::Tape& tape, std::span<const nn::Var> params,
                   std::span<const Features* const> batch, std::span<const std::size_t> labels,
                   nn::Mode mode, CounterRng& rng);

struct Prediction {
  std::string label;
  std::vector<double> probs;  // aligned with Model::labels()
  double latency_s = 0.0;
};

/// Tokenize -> features -> forward (dropout off) -> softmax. Ties in the
/// argmax go to the lowest label index.
Prediction predict(const Model& model, std::string_view text);

class CheckpointError : public std::runtime_error {
 public:
  enum class Reason { io, parse, version, checksum, kind_mismatch, invalid };
  CheckpointError(Reason reason, const std::string& what)
      : std::runtime_error(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint JSON text (compact, keys sorted, trailing newline).
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view text,
                             std::optional<ModelKind> expected_kind = std::nullopt);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path,
                      std::optional<ModelKind> expected_kind = std::nullopt);

}  // namespace faultclass
