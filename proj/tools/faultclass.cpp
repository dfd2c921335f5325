/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

// faultclass: synth | train | predict | evaluate | compare | embeddings | selfcheck
//
// Exit codes: 0 success, 1 internal failure, 2 usage or validation error.
// Machine-readable output goes to stdout or --out files; progress to stderr.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "faultclass/corpus.hpp"
#include "faultclass/digest.hpp"
#include "faultclass/eval.hpp"
#include "faultclass/models.hpp"
#include "faultclass/numfmt.hpp"
#include "faultclass/rng.hpp"
#include "faultclass/selfcheck.hpp"
#include "faultclass/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace faultclass::cli {

namespace {

constexpr std::uint64_t kSplitStream = 0x5b117;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct Manifest {
  std::vector<std::string> command_line;
  json config = json::object();
  std::string input_sha256;
  std::uint64_t seed = 0;
  std::string started_at = utc_now();

  void write_for(const fs::path& artifact) const {
    json j = {{"command_line", command_line},
              {"config", config},
              {"input_sha256", input_sha256},
              {"master_seed", seed},
              {"tool_version", FAULTCLASS_VERSION},
              {"started_at", started_at},
              {"finished_at", utc_now()}};
    write_file(artifact.string() + ".manifest.json", j.dump(2) + "\n");
  }
};

// Flags shared by train and evaluate.
struct ModelFlags {
  std::string model = "mlp";
  std::string level = "subclass";
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double dropout = 0.5;
  std::size_t hidden1 = 256;
  std::size_t hidden2 = 64;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t feature_maps = 50;
  std::size_t lstm_hidden = 64;
  std::string tokenizer = "whitespace";
  std::size_t ngram = 2;
  std::size_t min_count = 1;
  std::size_t max_len = 64;
  bool tfidf_fit_all = false;
  std::size_t embedding_dim = 64;
  std::size_t w2v_window = 4;
  std::size_t w2v_negatives = 5;
  std::size_t w2v_epochs = 15;
  double w2v_lr = 0.025;

  void add_to(CLI::App* app) {
    app->add_option("--model", model, "mlp | cnn | rnn")
        ->check(CLI::IsMember({"mlp", "cnn", "rnn"}))
        ->capture_default_str();
    app->add_option("--epochs", epochs)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr", learning_rate, "Adam learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--dropout", dropout)->check(CLI::Range(0.0, 0.999999))->capture_default_str();
    app->add_option("--hidden1", hidden1)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--hidden2", hidden2)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--filter-widths", filter_widths)->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--feature-maps", feature_maps)->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--lstm-hidden", lstm_hidden)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--tokenizer", tokenizer, "whitespace | char_ngram")
        ->check(CLI::IsMember({"whitespace", "char_ngram"}))
        ->capture_default_str();
    app->add_option("--ngram", ngram, "n for the char_ngram tokenizer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--min-count", min_count)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--max-len", max_len)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_flag("--tfidf-fit-all", tfidf_fit_all,
                  "fit TF-IDF on every corpus text instead of the training split only");
    app->add_option("--embedding-dim", embedding_dim)->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--w2v-window", w2v_window)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--w2v-negatives", w2v_negatives)->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--w2v-epochs", w2v_epochs)->capture_default_str();
    app->add_option("--w2v-lr", w2v_lr)->check(CLI::PositiveNumber)->capture_default_str();
  }

  ModelConfig to_config(std::uint64_t seed) const {
    ModelConfig c;
    c.kind = parse_model_kind(model);
    c.level = parse_label_level(level);
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.seed = seed;
    c.learning_rate = learning_rate;
    c.dropout = dropout;
    c.hidden1 = hidden1;
    c.hidden2 = hidden2;
    c.filter_widths = filter_widths;
    c.feature_maps = feature_maps;
    c.lstm_hidden = lstm_hidden;
    c.tokenizer = tokenizer == "whitespace" ? TokenizerMode::whitespace()
                                            : TokenizerMode::char_ngram(ngram);
    c.min_count = min_count;
    c.max_len = max_len;
    c.tfidf_fit_all = tfidf_fit_all;
    c.skipgram.dim = embedding_dim;
    c.skipgram.window = w2v_window;
    c.skipgram.negatives = w2v_negatives;
    c.skipgram.epochs = w2v_epochs;
    c.skipgram.learning_rate = w2v_lr;
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string corpus;
  std::string taxonomy;
  std::string split_test = "taxonomy";

  void add_to(CLI::App* app) {
    app->add_option("--corpus", corpus, "JSON Lines corpus")->required()->check(CLI::ExistingFile);
    app->add_option("--taxonomy", taxonomy, "taxonomy CSV (default: built-in table)")
        ->check(CLI::ExistingFile);
    app->add_option("--split-test-per-class", split_test,
                    "test cases per class: a count, or 'taxonomy' for the n_test column")
        ->capture_default_str();
  }

  Taxonomy load_taxonomy() const {
    return taxonomy.empty() ? default_taxonomy() : Taxonomy::load_csv(taxonomy);
  }

  std::map<std::string, std::size_t> test_counts(const Taxonomy& tax,
                                                 const std::vector<FailureCase>& cases) const {
    if (split_test == "taxonomy") return taxonomy_test_counts(tax);
    std::size_t n = 0;
    try {
      std::size_t pos = 0;
      n = std::stoul(split_test, &pos);
      if (pos != split_test.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError("--split-test-per-class: expected a count or 'taxonomy', got '" +
                       split_test + "'");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& c : cases) counts[c.subclass] = n;
    return counts;
  }
};

// Config file keys mirror long flag names without the leading dashes.
std::vector<std::string> config_file_args(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("--config: " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("--config: top level must be a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

int cmd_synth(const SynthSpec& spec, const std::string& taxonomy_path, const fs::path& out,
              Manifest manifest) {
  const auto taxonomy =
      taxonomy_path.empty() ? default_taxonomy() : Taxonomy::load_csv(taxonomy_path);
  const auto cases = generate_synthetic(spec, taxonomy);
  std::ostringstream buf;
  write_corpus(buf, cases);
  write_file(out, buf.str());
  manifest.config = {{"keywords_per_subclass", spec.keywords_per_subclass},
                     {"tokens_per_doc", spec.tokens_per_doc},
                     {"keyword_prob", spec.keyword_prob},
                     {"background_per_field", spec.background_per_field},
                     {"train_per_subclass", spec.train_per_subclass},
                     {"test_per_subclass", spec.test_per_subclass}};
  manifest.input_sha256 = taxonomy_path.empty() ? "" : sha256_file(taxonomy_path);
  manifest.seed = spec.seed;
  manifest.write_for(out);
  std::cerr << "wrote " << cases.size() << " cases over "
            << synthetic_subclasses(taxonomy).size() << " subclasses to " << out.string() << "\n";
  return 0;
}

CorpusSplit load_split(const DataFlags& data, const Taxonomy& taxonomy, std::uint64_t seed,
                       std::string* corpus_hash) {
  const auto cases = load_corpus(data.corpus, taxonomy);
  *corpus_hash = sha256_file(data.corpus);
  return stratified_split(cases, data.test_counts(taxonomy, cases), mix_seed(seed, kSplitStream));
}

int cmd_train(const ModelFlags& flags, const DataFlags& data, std::uint64_t seed,
              const fs::path& out, Manifest manifest) {
  const auto config = flags.to_config(seed);
  const auto taxonomy = data.load_taxonomy();
  auto split = load_split(data, taxonomy, seed, &manifest.input_sha256);
  std::cerr << "training " << to_string(config.kind) << " (" << to_string(config.level) << ") on "
            << split.train.size() << " cases\n";
  const auto model = fit(config, split.train, taxonomy, split.test);
  for (std::size_t e = 0; e < model.history().size(); ++e) {
    std::cerr << "epoch " << e + 1 << " loss " << format_double(model.history()[e]) << "\n";
  }
  save_checkpoint(model, out);
  manifest.config = config_to_json(config);
  manifest.seed = seed;
  manifest.write_for(out);
  return 0;
}

json prediction_json(const Model& model, const Prediction& p) {
  json probs = json::object();
  for (std::size_t i = 0; i < p.probs.size(); ++i) probs[model.labels()[i]] = p.probs[i];
  return {{"label", p.label}, {"probs", probs}, {"latency_s", p.latency_s}};
}

int cmd_predict(const fs::path& checkpoint, const std::optional<std::string>& text,
                const std::string& input) {
  if (text.has_value() == !input.empty()) {
    throw UsageError("predict needs exactly one of --text or --input");
  }
  const auto model = load_checkpoint(checkpoint);
  if (text) {
    std::cout << prediction_json(model, predict(model, *text)).dump() << "\n";
    return 0;
  }
  std::ifstream in(input);
  if (!in) throw UsageError("cannot read " + input);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::cout << prediction_json(model, predict(model, line)).dump() << "\n";
  }
  return 0;
}

int cmd_evaluate(const ModelFlags& flags, const DataFlags& data, std::size_t runs,
                 std::uint64_t master_seed, bool with_major_model, const std::string& out,
                 Manifest manifest) {
  auto config = flags.to_config(master_seed);
  const auto taxonomy = data.load_taxonomy();
  const auto split = load_split(data, taxonomy, master_seed, &manifest.input_sha256);
  EvalOptions options;
  options.with_major_model = with_major_model;
  options.progress = [](const std::string& line) { std::cerr << line << "\n"; };
  const auto report = repeated_runs(split, taxonomy, config, runs, master_seed, options);
  const auto text = report_to_json(report).dump(2) + "\n";
  std::cerr << to_string(report.kind) << ": mean subclass accuracy "
            << format_double(report.mean_subclass_accuracy) << ", mean major accuracy "
            << format_double(report.mean_major_accuracy) << "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
    manifest.config = config_to_json(report.config);
    manifest.seed = master_seed;
    manifest.write_for(out);
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out_dir,
                Manifest manifest) {
  std::vector<EvalReport> reports;
  std::string joined;
  for (const auto& p : paths) {
    const auto content = read_file(p);
    joined += content;
    json j;
    try {
      j = json::parse(content);
    } catch (const json::parse_error& e) {
      throw UsageError(p + " is not valid JSON: " + e.what());
    }
    reports.push_back(report_from_json(j));
  }
  const auto cmp = compare_models(reports);
  const auto text = comparison_to_json(cmp).dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    std::ostringstream acc;
    std::ostringstream mis;
    write_accuracy_csv(acc, cmp);
    write_mismatch_csv(mis, cmp);
    write_file(dir / "comparison.json", text);
    write_file(dir / "accuracy.csv", acc.str());
    write_file(dir / "mismatch.csv", mis.str());
    manifest.input_sha256 = sha256_hex(joined);
    for (const char* name : {"comparison.json", "accuracy.csv", "mismatch.csv"}) {
      manifest.write_for(dir / name);
    }
  }
  for (const auto& r : cmp.rows) {
    std::cerr << to_string(r.kind) << ": subclass " << format_double(r.mean_subclass_accuracy)
              << " (rank " << r.subclass_rank << "), major " << format_double(r.mean_major_accuracy)
              << " (rank " << r.major_rank << ")\n";
  }
  return 0;
}

int cmd_embeddings(const fs::path& checkpoint, const std::string& out) {
  const auto model = load_checkpoint(checkpoint);
  if (model.config().kind == ModelKind::mlp) {
    throw UsageError("mlp checkpoints have no word embeddings");
  }
  const auto& table = model.parameters().front().value;
  const EmbeddingMatrix matrix{table.dim(0), table.dim(1), table.values()};
  std::ostringstream buf;
  write_embeddings_csv(buf, matrix, model.pipeline().vocab);
  if (out.empty()) {
    std::cout << buf.str();
  } else {
    write_file(out, buf.str());
  }
  return 0;
}

int cmd_selfcheck(std::size_t seeds, bool corrupt) {
  SelfCheckOptions options;
  options.seeds = seeds;
  if (corrupt) options.analytic_scale = 2.0;
  auto outcomes = run_gradient_suite(options);
  outcomes.push_back(run_tfidf_oracle_check());
  bool ok = true;
  for (const auto& o : outcomes) {
    std::cout << (o.passed ? "PASS " : "FAIL ") << o.name << " max_rel_error "
              << format_double(o.max_relative_error) << " checked " << o.checked << " skipped "
              << o.skipped << "\n";
    ok = ok && o.passed;
  }
  std::cout << (ok ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  // Splice config-file values in right after the subcommand; later flags win.
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      auto extra = config_file_args(args[i + 1]);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      args.insert(args.begin() + (args.empty() ? 0 : 1), extra.begin(), extra.end());
      break;
    }
  }

  CLI::App app{"faultclass: hierarchical failure-case classification"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", FAULTCLASS_VERSION);
  std::string config_path;  // consumed above, declared for --help
  app.add_option("--config", config_path, "JSON file of flag values (flags override it)");

  Manifest manifest;
  manifest.command_line.assign(argv, argv + argc);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthSpec spec;
  std::string synth_out;
  std::string synth_taxonomy;
  synth->add_option("--out", synth_out, "output JSON Lines file")->required();
  synth->add_option("--taxonomy", synth_taxonomy)->check(CLI::ExistingFile);
  synth->add_option("--k", spec.keywords_per_subclass, "keywords per subclass")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--l", spec.tokens_per_doc, "tokens per document")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--p", spec.keyword_prob, "keyword probability in (0, 1]")
      ->check(CLI::Validator(
          [](std::string& s) -> std::string {
            double v = 0.0;
            try {
              v = std::stod(s);
            } catch (const std::exception&) {
              return "not a number: " + s;
            }
            return v > 0.0 && v <= 1.0 ? std::string() : "value " + s + " not in (0, 1]";
          },
          "(0,1]"))
      ->capture_default_str();
  synth->add_option("--background", spec.background_per_field, "background pool size per field")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--train-per-class", spec.train_per_subclass)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--test-per-class", spec.test_per_subclass)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
  ModelFlags train_flags;
  DataFlags train_data;
  std::uint64_t train_seed = 1;
  std::string train_out;
  train_flags.add_to(train_cmd);
  train_cmd->add_option("--level", train_flags.level, "major | subclass")
      ->check(CLI::IsMember({"major", "subclass"}))
      ->capture_default_str();
  train_data.add_to(train_cmd);
  train_cmd->add_option("--seed", train_seed)->capture_default_str();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "classify texts with a checkpoint");
  std::string checkpoint;
  std::optional<std::string> text;
  std::string input;
  predict_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--text", text, "single text");
  predict_cmd->add_option("--input", input, "file with one text per line")
      ->check(CLI::ExistingFile);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "repeated training runs on a fixed split");
  ModelFlags eval_flags;
  DataFlags eval_data;
  std::size_t runs = 5;
  std::uint64_t master_seed = 1;
  bool with_major_model = false;
  std::string eval_out;
  eval_flags.add_to(eval_cmd);
  eval_data.add_to(eval_cmd);
  eval_cmd->add_option("--runs", runs)->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--master-seed", master_seed)->capture_default_str();
  eval_cmd->add_flag("--with-major-model", with_major_model,
                     "also train a major-class model per run");
  eval_cmd->add_option("--out", eval_out, "report path (default: stdout)");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "tabulate evaluation reports");
  std::vector<std::string> report_paths;
  std::string out_dir;
  compare_cmd->add_option("--reports", report_paths)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--out-dir", out_dir,
                          "directory for comparison.json, accuracy.csv, mismatch.csv");

  // embeddings
  auto* emb_cmd = app.add_subcommand("embeddings", "export a cnn/rnn embedding table as CSV");
  std::string emb_checkpoint;
  std::string emb_out;
  emb_cmd->add_option("--checkpoint", emb_checkpoint)->required()->check(CLI::ExistingFile);
  emb_cmd->add_option("--out", emb_out);

  // selfcheck
  auto* self_cmd = app.add_subcommand("selfcheck", "gradient and TF-IDF oracle checks");
  std::size_t seeds = 20;
  bool corrupt = false;
  self_cmd->add_option("--seeds", seeds)->check(CLI::PositiveNumber)->capture_default_str();
  self_cmd->add_flag("--corrupt-gradient", corrupt)->group("");  // test hook

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(spec, synth_taxonomy, synth_out, manifest);
    if (*train_cmd) return cmd_train(train_flags, train_data, train_seed, train_out, manifest);
    if (*predict_cmd) return cmd_predict(checkpoint, text, input);
    if (*eval_cmd) {
      return cmd_evaluate(eval_flags, eval_data, runs, master_seed, with_major_model, eval_out,
                          manifest);
    }
    if (*compare_cmd) return cmd_compare(report_paths, out_dir, manifest);
    if (*emb_cmd) return cmd_embeddings(emb_checkpoint, emb_out);
    if (*self_cmd) return cmd_selfcheck(seeds, corrupt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace faultclass::cli

int main(int argc, char** argv) { return faultclass::cli::run(argc, argv); }
