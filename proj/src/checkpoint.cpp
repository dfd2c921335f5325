/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <fstream>
#include <sstream>

#include "faultclass/digest.hpp"
#include "faultclass/models.hpp"
#include "faultclass/serialize.hpp"

namespace faultclass {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  json tokenizer = {{"mode", c.tokenizer.kind == TokenizerMode::Kind::whitespace ? "whitespace"
                                                                                 : "char_ngram"}};
  if (c.tokenizer.kind == TokenizerMode::Kind::char_ngram) tokenizer["n"] = c.tokenizer.n;
  return {
      {"kind", std::string(to_string(c.kind))},
      {"level", std::string(to_string(c.level))},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"learning_rate", c.learning_rate},
      {"dropout", c.dropout},
      {"hidden1", c.hidden1},
      {"hidden2", c.hidden2},
      {"filter_widths", c.filter_widths},
      {"feature_maps", c.feature_maps},
      {"lstm_hidden", c.lstm_hidden},
      {"tokenizer", tokenizer},
      {"min_count", c.min_count},
      {"max_len", c.max_len},
      {"tfidf_fit_all", c.tfidf_fit_all},
      {"skipgram",
       {{"dim", c.skipgram.dim},
        {"window", c.skipgram.window},
        {"negatives", c.skipgram.negatives},
        {"epochs", c.skipgram.epochs},
        {"learning_rate", c.skipgram.learning_rate}}},
  };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument(std::string("unknown ") + where + " key '" + key + "'");
  }
}

}  // namespace

ModelConfig config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  reject_unknown(j,
                 {"kind", "level", "epochs", "batch_size", "seed", "learning_rate", "dropout",
                  "hidden1", "hidden2", "filter_widths", "feature_maps", "lstm_hidden",
                  "tokenizer", "min_count", "max_len", "tfidf_fit_all", "skipgram"},
                 "config");
  std::string name;
  if (j.contains("kind")) {
    read(j, "kind", name);
    c.kind = parse_model_kind(name);
  }
  if (j.contains("level")) {
    read(j, "level", name);
    c.level = parse_label_level(name);
  }
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "learning_rate", c.learning_rate);
  read(j, "dropout", c.dropout);
  read(j, "hidden1", c.hidden1);
  read(j, "hidden2", c.hidden2);
  read(j, "filter_widths", c.filter_widths);
  read(j, "feature_maps", c.feature_maps);
  read(j, "lstm_hidden", c.lstm_hidden);
  read(j, "min_count", c.min_count);
  read(j, "max_len", c.max_len);
  read(j, "tfidf_fit_all", c.tfidf_fit_all);
  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    if (!t.is_object()) throw std::invalid_argument("config key 'tokenizer' must be an object");
    reject_unknown(t, {"mode", "n"}, "tokenizer");
    std::string mode = "whitespace";
    std::size_t n = 0;
    read(t, "mode", mode);
    read(t, "n", n);
    if (mode == "whitespace") {
      c.tokenizer = TokenizerMode::whitespace();
    } else if (mode == "char_ngram") {
      c.tokenizer = TokenizerMode::char_ngram(n);
    } else {
      throw std::invalid_argument("unknown tokenizer mode '" + mode + "'");
    }
  }
  if (j.contains("skipgram")) {
    const auto& s = j.at("skipgram");
    if (!s.is_object()) throw std::invalid_argument("config key 'skipgram' must be an object");
    reject_unknown(s, {"dim", "window", "negatives", "epochs", "learning_rate"}, "skipgram");
    read(s, "dim", c.skipgram.dim);
    read(s, "window", c.skipgram.window);
    read(s, "negatives", c.skipgram.negatives);
    read(s, "epochs", c.skipgram.epochs);
    read(s, "learning_rate", c.skipgram.learning_rate);
  }
  return c;
}

namespace {

json payload_of(const Model& model) {
  const auto& pipeline = model.pipeline();
  json features = json::object();
  if (pipeline.tfidf) {
    features["tfidf"] = {{"n_docs", pipeline.tfidf->n_docs}, {"idf", pipeline.tfidf->idf}};
  } else {
    features["max_len"] = model.config().max_len;
  }
  json params = json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
  }
  return {
      {"version", kCheckpointVersion},
      {"kind", std::string(to_string(model.config().kind))},
      {"level", std::string(to_string(model.config().level))},
      {"config", config_to_json(model.config())},
      {"labels", model.labels()},
      {"vocabulary",
       {{"tokens", pipeline.vocab.regular_tokens()},
        {"doc_freq", pipeline.vocab.regular_doc_freq()}}},
      {"features", features},
      {"parameters", params},
      {"history", model.history()},
  };
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  json doc = payload_of(model);
  doc["crc32"] = crc32(doc.dump());
  return doc.dump() + "\n";
}

Model deserialize_checkpoint(std::string_view text, std::optional<ModelKind> expected_kind) {
  using Reason = CheckpointError::Reason;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(Reason::parse, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer()) {
    throw CheckpointError(Reason::invalid, "checkpoint has no integer version");
  }
  if (doc["version"].get<int>() != kCheckpointVersion) {
    throw CheckpointError(Reason::version, "checkpoint version " + doc["version"].dump() +
                                               " is not supported (expected " +
                                               std::to_string(kCheckpointVersion) + ")");
  }
  if (!doc.contains("crc32") || !doc["crc32"].is_number_unsigned()) {
    throw CheckpointError(Reason::checksum, "checkpoint has no crc32");
  }
  const auto stored = doc["crc32"].get<std::uint64_t>();
  doc.erase("crc32");
  if (stored != crc32(doc.dump())) {
    throw CheckpointError(Reason::checksum, "checkpoint checksum mismatch (file corrupted)");
  }
  try {
    const auto kind = parse_model_kind(doc.at("kind").get<std::string>());
    if (expected_kind && *expected_kind != kind) {
      throw CheckpointError(Reason::kind_mismatch,
                            "checkpoint holds a " + std::string(to_string(kind)) +
                                " model, expected " + std::string(to_string(*expected_kind)));
    }
    const auto config = config_from_json(doc.at("config"));
    if (config.kind != kind || std::string(to_string(config.level)) != doc.at("level")) {
      throw CheckpointError(Reason::invalid, "checkpoint header disagrees with its config");
    }
    FeaturePipeline pipeline;
    pipeline.vocab = Vocabulary::from_tokens(
        doc.at("vocabulary").at("tokens").get<std::vector<std::string>>(),
        doc.at("vocabulary").at("doc_freq").get<std::vector<std::size_t>>());
    const auto& features = doc.at("features");
    if (features.contains("tfidf")) {
      TfIdfModel tfidf{pipeline.vocab, features["tfidf"].at("idf").get<std::vector<double>>(),
                       features["tfidf"].at("n_docs").get<std::size_t>()};
      if (tfidf.idf.size() != pipeline.vocab.size()) {
        throw CheckpointError(Reason::invalid, "idf length does not match vocabulary");
      }
      pipeline.tfidf = std::move(tfidf);
    }
    std::vector<NamedTensor> params;
    for (const auto& p : doc.at("parameters")) {
      params.push_back({p.at("name").get<std::string>(),
                        nn::Tensor(p.at("shape").get<nn::Shape>(),
                                   p.at("data").get<std::vector<double>>())});
    }
    return Model::from_parts(config, doc.at("labels").get<std::vector<std::string>>(),
                             std::move(pipeline), std::move(params),
                             doc.at("history").get<std::vector<double>>());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Reason::invalid, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Reason::io, "cannot write " + path.string());
  out << serialize_checkpoint(model);
  if (!out) throw CheckpointError(CheckpointError::Reason::io, "failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Reason::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), expected_kind);
}

}  // namespace faultclass
