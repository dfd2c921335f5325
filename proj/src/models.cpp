/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "faultclass/adam.hpp"
#include "faultclass/rng.hpp"

namespace faultclass {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kDropoutStream = 13;
constexpr std::uint64_t kSkipGramStream = 14;

using nn::Shape;
using nn::Tensor;
using nn::Var;

void fill_uniform(Tensor& t, double bound, CounterRng& rng) {
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t max_width(const ModelConfig& c) {
  return *std::max_element(c.filter_widths.begin(), c.filter_widths.end());
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::cnn: return "cnn";
    case ModelKind::rnn: return "rnn";
  }
  return "?";
}

std::string_view to_string(LabelLevel level) {
  return level == LabelLevel::major ? "major" : "subclass";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mlp") return ModelKind::mlp;
  if (name == "cnn") return ModelKind::cnn;
  if (name == "rnn") return ModelKind::rnn;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "' (mlp|cnn|rnn)");
}

LabelLevel parse_label_level(std::string_view name) {
  if (name == "major") return LabelLevel::major;
  if (name == "subclass") return LabelLevel::subclass;
  throw std::invalid_argument("unknown label level '" + std::string(name) +
                              "' (major|subclass)");
}

void ModelConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (tokenizer.kind == TokenizerMode::Kind::char_ngram && tokenizer.n == 0) {
    throw std::invalid_argument("char_ngram tokenizer needs n >= 1");
  }
  switch (kind) {
    case ModelKind::mlp:
      if (hidden1 < 1 || hidden2 < 1) throw std::invalid_argument("hidden sizes must be >= 1");
      break;
    case ModelKind::cnn:
      if (feature_maps < 1) throw std::invalid_argument("feature_maps must be >= 1");
      if (filter_widths.empty()) throw std::invalid_argument("filter_widths must not be empty");
      for (auto w : filter_widths) {
        if (w < 1) throw std::invalid_argument("filter widths must be >= 1");
      }
      if (max_len < max_width(*this)) {
        throw std::invalid_argument("max_len must be >= the widest filter");
      }
      skipgram.validate();
      break;
    case ModelKind::rnn:
      if (lstm_hidden < 1) throw std::invalid_argument("lstm_hidden must be >= 1");
      skipgram.validate();
      break;
  }
}

std::vector<Shape> Model::expected_shapes() const {
  const std::size_t vocab = pipeline_.vocab.size();
  const std::size_t classes = labels_.size();
  const std::size_t dim = config_.skipgram.dim;
  switch (config_.kind) {
    case ModelKind::mlp:
      return {{vocab, config_.hidden1}, {config_.hidden1},
              {config_.hidden1, config_.hidden2}, {config_.hidden2},
              {config_.hidden2, classes}, {classes}};
    case ModelKind::cnn: {
      std::vector<Shape> shapes{{vocab, dim}};
      for (auto w : config_.filter_widths) {
        shapes.push_back({w, dim, config_.feature_maps});
        shapes.push_back({config_.feature_maps});
      }
      const std::size_t pooled = config_.filter_widths.size() * config_.feature_maps;
      shapes.push_back({pooled, classes});
      shapes.push_back({classes});
      return shapes;
    }
    case ModelKind::rnn: {
      const std::size_t h = config_.lstm_hidden;
      return {{vocab, dim}, {dim, 4 * h}, {h, 4 * h}, {4 * h}, {h, classes}, {classes}};
    }
  }
  return {};
}

namespace {

std::vector<std::string> parameter_names(const ModelConfig& c) {
  switch (c.kind) {
    case ModelKind::mlp:
      return {"dense1.weight", "dense1.bias", "dense2.weight", "dense2.bias", "output.weight",
              "output.bias"};
    case ModelKind::cnn: {
      std::vector<std::string> names{"embedding"};
      for (auto w : c.filter_widths) {
        names.push_back("conv" + std::to_string(w) + ".weight");
        names.push_back("conv" + std::to_string(w) + ".bias");
      }
      names.push_back("output.weight");
      names.push_back("output.bias");
      return names;
    }
    case ModelKind::rnn:
      return {"embedding", "lstm.w_input", "lstm.w_hidden", "lstm.bias", "output.weight",
              "output.bias"};
  }
  return {};
}

void check_pipeline(const ModelConfig& config, const FeaturePipeline& pipeline, bool need_init) {
  if (config.kind == ModelKind::mlp) {
    if (!pipeline.tfidf) throw ModelError("mlp model needs a TF-IDF pipeline");
    if (pipeline.initial_embeddings) throw ModelError("mlp model given word embeddings");
    if (pipeline.tfidf->vocab.size() != pipeline.vocab.size()) {
      throw ModelError("TF-IDF vocabulary does not match pipeline vocabulary");
    }
    return;
  }
  if (pipeline.tfidf) throw ModelError(std::string(to_string(config.kind)) + " model given TF-IDF features");
  if (!need_init) return;
  if (!pipeline.initial_embeddings) {
    throw ModelError(std::string(to_string(config.kind)) + " model needs word embeddings");
  }
  const auto& e = *pipeline.initial_embeddings;
  if (e.rows != pipeline.vocab.size() || e.dim != config.skipgram.dim) {
    throw ModelError("embedding matrix shape does not match vocabulary/config");
  }
}

}  // namespace

Model Model::build(ModelConfig config, std::vector<std::string> labels, FeaturePipeline pipeline) {
  config.validate();
  if (labels.empty()) throw ModelError("model needs at least one label");
  check_pipeline(config, pipeline, true);
  Model m;
  m.config_ = std::move(config);
  m.labels_ = std::move(labels);
  m.pipeline_ = std::move(pipeline);

  const auto shapes = m.expected_shapes();
  const auto names = parameter_names(m.config_);
  CounterRng rng(mix_seed(m.config_.seed, kInitStream));
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    m.params_.push_back({names[k], Tensor(shapes[k])});
  }
  auto& p = m.params_;
  switch (m.config_.kind) {
    case ModelKind::mlp:
      for (std::size_t k = 0; k < p.size(); k += 2) {
        const auto& s = p[k].value.shape();
        fill_uniform(p[k].value, glorot_bound(s[0], s[1]), rng);
      }
      break;
    case ModelKind::cnn: {
      p[0].value = Tensor(p[0].value.shape(), m.pipeline_.initial_embeddings->values);
      const std::size_t dim = m.config_.skipgram.dim;
      for (std::size_t k = 0; k < m.config_.filter_widths.size(); ++k) {
        const std::size_t w = m.config_.filter_widths[k];
        fill_uniform(p[1 + 2 * k].value, glorot_bound(w * dim, m.config_.feature_maps), rng);
      }
      const auto& s = p[p.size() - 2].value.shape();
      fill_uniform(p[p.size() - 2].value, glorot_bound(s[0], s[1]), rng);
      break;
    }
    case ModelKind::rnn: {
      p[0].value = Tensor(p[0].value.shape(), m.pipeline_.initial_embeddings->values);
      const std::size_t h = m.config_.lstm_hidden;
      const double bound = 1.0 / std::sqrt(static_cast<double>(h));
      fill_uniform(p[1].value, bound, rng);
      fill_uniform(p[2].value, bound, rng);
      for (std::size_t k = h; k < 2 * h; ++k) p[3].value[k] = 1.0;  // forget gate
      const auto& s = p[4].value.shape();
      fill_uniform(p[4].value, glorot_bound(s[0], s[1]), rng);
      break;
    }
  }
  return m;
}

Model Model::from_parts(ModelConfig config, std::vector<std::string> labels,
                        FeaturePipeline pipeline, std::vector<NamedTensor> params,
                        std::vector<double> history) {
  config.validate();
  if (labels.empty()) throw ModelError("model needs at least one label");
  check_pipeline(config, pipeline, false);
  Model m;
  m.config_ = std::move(config);
  m.labels_ = std::move(labels);
  m.pipeline_ = std::move(pipeline);
  const auto shapes = m.expected_shapes();
  const auto names = parameter_names(m.config_);
  if (params.size() != shapes.size()) throw ModelError("wrong number of parameter tensors");
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (params[k].name != names[k] || params[k].value.shape() != shapes[k]) {
      throw ModelError("parameter " + params[k].name + " " + nn::to_string(params[k].value.shape()) +
                       " does not match expected " + names[k] + " " + nn::to_string(shapes[k]));
    }
    if (!params[k].value.all_finite()) throw ModelError("parameter " + names[k] + " is not finite");
  }
  m.params_ = std::move(params);
  m.history_ = std::move(history);
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::optional<std::size_t> Model::label_index(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

Features Model::featurize_tokens(std::span<const std::string> tokens) const {
  if (config_.kind == ModelKind::mlp) return tfidf_transform(tokens, *pipeline_.tfidf);
  return encode_sequence(tokens, pipeline_.vocab, config_.max_len);
}

Features Model::featurize(std::string_view text) const {
  const auto tokens = tokenize(text, config_.tokenizer);
  return featurize_tokens(tokens);
}

Var Model::logits(nn::Tape& tape, std::span<const Var> params,
                  std::span<const Features* const> batch, nn::Mode mode, CounterRng& rng) const {
  if (params.size() != params_.size()) throw ModelError("parameter variable count mismatch");
  if (batch.empty()) throw ModelError("empty batch");
  const double p = config_.dropout;
  switch (config_.kind) {
    case ModelKind::mlp: {
      const std::size_t width = pipeline_.vocab.size();
      Tensor x(Shape{batch.size(), width});
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& v = std::get<std::vector<double>>(*batch[r]);
        std::copy(v.begin(), v.end(), x.row(r).begin());
      }
      Var h = tape.constant(std::move(x));
      h = nn::dropout(tape, nn::relu(tape, nn::affine(tape, h, params[0], params[1])), p, mode, rng);
      h = nn::dropout(tape, nn::relu(tape, nn::affine(tape, h, params[2], params[3])), p, mode, rng);
      return nn::affine(tape, h, params[4], params[5]);
    }
    case ModelKind::cnn: {
      const std::size_t n_widths = config_.filter_widths.size();
      std::vector<nn::ConvFilter> filters;
      for (std::size_t k = 0; k < n_widths; ++k) {
        filters.push_back({params[1 + 2 * k], params[2 + 2 * k]});
      }
      const std::size_t widest = max_width(config_);
      std::vector<Var> rows;
      rows.reserve(batch.size());
      for (const auto* f : batch) {
        const auto& seq = std::get<EncodedSequence>(*f);
        // All-PAD windows give the bias alone; keep only the first of them.
        const std::size_t span_len = std::min(seq.ids.size(), seq.true_length + widest);
        const Var emb = nn::embedding(
            tape, params[0], std::span<const TokenId>(seq.ids.data(), span_len));
        std::vector<Var> pooled;
        for (const Var conv : nn::conv1d_bank(tape, emb, filters)) {
          // ReLU commutes with max over time.
          pooled.push_back(nn::relu(tape, nn::max_over_time(tape, conv)));
        }
        rows.push_back(nn::concat(tape, pooled));
      }
      Var h = nn::stack_rows(tape, rows);
      h = nn::dropout(tape, h, p, mode, rng);
      return nn::affine(tape, h, params[params.size() - 2], params[params.size() - 1]);
    }
    case ModelKind::rnn: {
      const nn::LstmParams lstm{params[1], params[2], params[3]};
      std::vector<Var> seqs;
      seqs.reserve(batch.size());
      for (const auto* f : batch) {
        const auto& seq = std::get<EncodedSequence>(*f);
        seqs.push_back(nn::embedding(
            tape, params[0], std::span<const TokenId>(seq.ids.data(), seq.true_length)));
      }
      Var h = nn::relu(tape, nn::lstm_batch(tape, seqs, lstm));
      h = nn::dropout(tape, h, p, mode, rng);
      return nn::affine(tape, h, params[4], params[5]);
    }
  }
  throw ModelError("unknown model kind");
}

std::string label_of(const FailureCase& c, LabelLevel level, const Taxonomy& taxonomy) {
  return level == LabelLevel::subclass ? c.subclass : taxonomy.major_of(c.subclass);
}

FeaturePipeline fit_pipeline(const ModelConfig& config, std::span<const FailureCase> train,
                             std::span<const FailureCase> unlabeled) {
  config.validate();
  std::vector<TokenList> docs;
  docs.reserve(train.size() + unlabeled.size());
  for (const auto& c : train) docs.push_back(tokenize(c.text, config.tokenizer));

  FeaturePipeline pipeline;
  if (config.kind == ModelKind::mlp) {
    if (config.tfidf_fit_all) {
      for (const auto& c : unlabeled) docs.push_back(tokenize(c.text, config.tokenizer));
    }
    pipeline.vocab = Vocabulary::build(docs, config.min_count);
    pipeline.tfidf = fit_tfidf(docs, pipeline.vocab);
    return pipeline;
  }
  pipeline.vocab = Vocabulary::build(docs, config.min_count);
  std::vector<std::vector<TokenId>> ids;
  ids.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<TokenId> row;
    row.reserve(doc.size());
    for (const auto& t : doc) row.push_back(pipeline.vocab.id_of(t));
    ids.push_back(std::move(row));
  }
  SkipGramConfig sg = config.skipgram;
  sg.seed = mix_seed(config.seed, kSkipGramStream);
  pipeline.initial_embeddings = train_skipgram(ids, pipeline.vocab, sg).embeddings;
  return pipeline;
}

Var batch_loss(const Model& model, nn::Tape& tape, std::span<const Var> params,
               std::span<const Features* const> batch, std::span<const std::size_t> labels,
               nn::Mode mode, CounterRng& rng) {
  const Var logits = model.logits(tape, params, batch, mode, rng);
  return nn::softmax_cross_entropy(tape, logits, labels).loss;
}

Model train(Model model, std::span<const FailureCase> cases, const Taxonomy& taxonomy) {
  if (cases.empty()) throw ModelError("empty training set");
  const auto& config = model.config();
  std::vector<Features> features;
  std::vector<std::size_t> targets;
  std::set<std::string> distinct;
  features.reserve(cases.size());
  for (const auto& c : cases) {
    const auto label = label_of(c, config.level, taxonomy);
    const auto index = model.label_index(label);
    if (!index) throw ModelError("training label '" + label + "' is not a model label");
    distinct.insert(label);
    targets.push_back(*index);
    features.push_back(model.featurize(c.text));
  }
  if (distinct.size() < 2) throw ModelError("training set has a single class");

  auto& named = model.mutable_parameters();
  std::vector<Tensor> values;
  values.reserve(named.size());
  for (auto& p : named) values.push_back(std::move(p.value));
  auto adam = nn::AdamState::for_params(values, {config.learning_rate});

  std::vector<std::size_t> order(cases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng shuffle_rng(mix_seed(config.seed, kShuffleStream));
  std::vector<double> history;
  std::vector<const Features*> batch;
  std::vector<std::size_t> batch_labels;
  std::vector<Var> vars;
  std::vector<Tensor> grads;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&features[order[i]]);
        batch_labels.push_back(targets[order[i]]);
      }
      nn::Tape tape;
      vars.clear();
      for (const auto& v : values) vars.push_back(tape.parameter(v));
      CounterRng dropout_rng(mix_seed(mix_seed(config.seed, kDropoutStream), step++));
      const Var loss =
          batch_loss(model, tape, vars, batch, batch_labels, nn::Mode::train, dropout_rng);
      total += tape.value(loss).item() * static_cast<double>(batch.size());
      tape.backward(loss);
      grads.clear();
      for (const auto& v : vars) grads.push_back(tape.grad(v));
      nn::adam_step(values, grads, adam);
    }
    history.push_back(total / static_cast<double>(order.size()));
  }
  for (std::size_t k = 0; k < named.size(); ++k) named[k].value = std::move(values[k]);
  model.set_history(std::move(history));
  return model;
}

Model fit(const ModelConfig& config, std::span<const FailureCase> cases, const Taxonomy& taxonomy,
          std::span<const FailureCase> unlabeled) {
  if (cases.empty()) throw ModelError("empty training set");
  std::set<std::string> labels;
  for (const auto& c : cases) labels.insert(label_of(c, config.level, taxonomy));
  auto pipeline = fit_pipeline(config, cases, unlabeled);
  auto model = Model::build(config, {labels.begin(), labels.end()}, std::move(pipeline));
  return train(std::move(model), cases, taxonomy);
}

Prediction predict(const Model& model, std::string_view text) {
  const auto start = std::chrono::steady_clock::now();
  const Features features = model.featurize(text);
  nn::Tape tape;
  std::vector<Var> vars;
  for (const auto& p : model.parameters()) vars.push_back(tape.constant_ref(p.value));
  const Features* batch[] = {&features};
  CounterRng unused(0);
  const Var logits = model.logits(tape, vars, batch, nn::Mode::infer, unused);
  Prediction out;
  out.probs = nn::softmax(tape.value(logits).data());
  const auto best = std::max_element(out.probs.begin(), out.probs.end());
  out.label = model.labels()[static_cast<std::size_t>(best - out.probs.begin())];
  out.latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace faultclass
