/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "faultclass/gradcheck.hpp"
#include "faultclass/models.hpp"
#include "faultclass/rng.hpp"

namespace faultclass {

namespace {

using nn::GradCheckOptions;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

Tensor random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces an op output to a scalar with fixed random weights so every output
// element contributes to the checked gradient.
Var reduce(Tape& tape, Var out, std::uint64_t seed) {
  CounterRng rng(mix_seed(seed, 99));
  return nn::weighted_sum(tape, out, random_tensor(tape.value(out).shape(), rng));
}

struct Case {
  nn::ScalarFn fn;
  std::vector<Tensor> point;
};

using CaseFactory = std::function<Case(std::uint64_t seed)>;

Model tiny_model(ModelKind kind, std::uint64_t seed) {
  const std::vector<FailureCase> docs = {
      {"0", "disk array failure halted trading", "A"},
      {"1", "atm network outage halted withdrawals", "B"},
      {"2", "phishing leak of customer data", "C"},
      {"3", "billing error overcharged customers", "A"},
  };
  ModelConfig config;
  config.kind = kind;
  config.seed = seed;
  config.hidden1 = 6;
  config.hidden2 = 5;
  config.filter_widths = {2, 3};
  config.feature_maps = 3;
  config.lstm_hidden = 3;
  config.max_len = 8;
  config.skipgram.dim = 4;
  FeaturePipeline pipeline;
  std::vector<TokenList> tokens;
  for (const auto& d : docs) tokens.push_back(tokenize(d.text, config.tokenizer));
  pipeline.vocab = Vocabulary::build(tokens, 1);
  if (kind == ModelKind::mlp) {
    pipeline.tfidf = fit_tfidf(tokens, pipeline.vocab);
  } else {
    CounterRng rng(mix_seed(seed, 7));
    EmbeddingMatrix e{pipeline.vocab.size(), config.skipgram.dim, {}};
    for (std::size_t i = 0; i < e.rows * e.dim; ++i) {
      e.values.push_back(i < e.dim ? 0.0 : rng.uniform(-1.0, 1.0));
    }
    pipeline.initial_embeddings = std::move(e);
  }
  return Model::build(config, {"A", "B", "C"}, std::move(pipeline));
}

Case model_case(ModelKind kind, std::uint64_t seed) {
  auto model = std::make_shared<Model>(tiny_model(kind, seed));
  auto features = std::make_shared<std::vector<Features>>();
  for (const char* text : {"disk failure halted trading", "atm outage", "phishing leak data",
                           "billing overcharged unseen words"}) {
    features->push_back(model->featurize(text));
  }
  Case c;
  for (const auto& p : model->parameters()) c.point.push_back(p.value);
  c.fn = [model, features, seed](Tape& tape, std::span<const Var> params) {
    std::vector<const Features*> batch;
    for (const auto& f : *features) batch.push_back(&f);
    const std::vector<std::size_t> labels = {0, 1, 2, 0};
    CounterRng rng(mix_seed(seed, 5));
    return batch_loss(*model, tape, params, batch, labels, nn::Mode::train, rng);
  };
  return c;
}

std::vector<std::pair<std::string, CaseFactory>> suite() {
  std::vector<std::pair<std::string, CaseFactory>> s;
  s.emplace_back("affine", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  return reduce(t, nn::affine(t, in[0], in[1], in[2]), seed);
                },
                {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}};
  });
  s.emplace_back("relu", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) { return reduce(t, nn::relu(t, in[0]), seed); },
                {random_tensor({4, 5}, rng)}};
  });
  s.emplace_back("dropout", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  CounterRng mask(mix_seed(seed, 3));
                  return reduce(t, nn::dropout(t, in[0], 0.5, nn::Mode::train, mask), seed);
                },
                {random_tensor({4, 5}, rng)}};
  });
  s.emplace_back("embedding", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  const std::vector<TokenId> ids = {2, 3, 2, 5, 1, 0};
                  return reduce(t, nn::embedding(t, in[0], ids), seed);
                },
                {random_tensor({6, 3}, rng)}};
  });
  s.emplace_back("conv1d_bank", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  const std::vector<nn::ConvFilter> filters = {{in[1], in[2]}, {in[3], in[4]}};
                  Var total = t.constant(Tensor::scalar(0.0));
                  std::uint64_t k = 0;
                  for (const Var out : nn::conv1d_bank(t, in[0], filters)) {
                    total = nn::add(t, total, reduce(t, out, mix_seed(seed, ++k)));
                  }
                  return total;
                },
                {random_tensor({7, 3}, rng), random_tensor({2, 3, 4}, rng), random_tensor({4}, rng),
                 random_tensor({3, 3, 2}, rng), random_tensor({2}, rng)}};
  });
  s.emplace_back("max_over_time", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  return reduce(t, nn::max_over_time(t, in[0]), seed);
                },
                {random_tensor({5, 4}, rng)}};
  });
  s.emplace_back("concat_stack", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  const Var joined = nn::concat(t, std::vector<Var>{in[0], in[1]});
                  const Var stacked = nn::stack_rows(t, std::vector<Var>{joined, joined});
                  return reduce(t, stacked, seed);
                },
                {random_tensor({3}, rng), random_tensor({2}, rng)}};
  });
  s.emplace_back("lstm_sequence", [](std::uint64_t seed) {
    CounterRng rng(seed);
    const std::size_t length = 1 + static_cast<std::size_t>(rng.below(6));
    return Case{[seed, length](Tape& t, std::span<const Var> in) {
                  const nn::LstmParams p{in[1], in[2], in[3]};
                  return reduce(t, nn::lstm_sequence(t, in[0], length, p, in[4], in[5]), seed);
                },
                {random_tensor({6, 3}, rng), random_tensor({3, 16}, rng),
                 random_tensor({4, 16}, rng), random_tensor({16}, rng), random_tensor({4}, rng),
                 random_tensor({4}, rng)}};
  });
  s.emplace_back("lstm_batch", [](std::uint64_t seed) {
    CounterRng rng(seed);
    const std::size_t a = 1 + static_cast<std::size_t>(rng.below(5));
    const std::size_t b = 1 + static_cast<std::size_t>(rng.below(5));
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  const nn::LstmParams p{in[3], in[4], in[5]};
                  return reduce(t, nn::lstm_batch(t, in.first(3), p), seed);
                },
                {random_tensor({a, 3}, rng), random_tensor({0, 3}, rng), random_tensor({b, 3}, rng),
                 random_tensor({3, 16}, rng), random_tensor({4, 16}, rng),
                 random_tensor({16}, rng)}};
  });
  s.emplace_back("softmax_cross_entropy", [](std::uint64_t seed) {
    CounterRng rng(seed);
    const auto label = static_cast<std::size_t>(rng.below(5));
    return Case{[label](Tape& t, std::span<const Var> in) {
                  const std::size_t labels[] = {label};
                  return nn::softmax_cross_entropy(t, in[0], labels).loss;
                },
                {random_tensor({5}, rng, -3.0, 3.0)}};
  });
  s.emplace_back("shared_parameter", [](std::uint64_t seed) {
    CounterRng rng(seed);
    return Case{[seed](Tape& t, std::span<const Var> in) {
                  const Var a = nn::affine(t, in[0], in[1], in[2]);
                  const Var b = nn::affine(t, nn::relu(t, a), in[1], in[2]);
                  return reduce(t, b, seed);
                },
                {random_tensor({2, 3}, rng), random_tensor({3, 3}, rng), random_tensor({3}, rng)}};
  });
  s.emplace_back("mlp_loss", [](std::uint64_t seed) { return model_case(ModelKind::mlp, seed); });
  s.emplace_back("cnn_loss", [](std::uint64_t seed) { return model_case(ModelKind::cnn, seed); });
  s.emplace_back("rnn_loss", [](std::uint64_t seed) { return model_case(ModelKind::rnn, seed); });
  return s;
}

}  // namespace

std::vector<CheckOutcome> run_gradient_suite(const SelfCheckOptions& options) {
  GradCheckOptions gc;
  gc.step = options.step;
  gc.tolerance = options.tolerance;
  gc.analytic_scale = options.analytic_scale;
  std::vector<CheckOutcome> outcomes;
  for (const auto& [name, factory] : suite()) {
    CheckOutcome o{name, 0.0, options.seeds, 0, 0, true};
    for (std::size_t s = 0; s < options.seeds; ++s) {
      auto c = factory(mix_seed(hash_string(name), s));
      const auto r = nn::gradient_check(c.fn, std::move(c.point), gc);
      o.max_relative_error = std::max(o.max_relative_error, r.max_relative_error);
      o.checked += r.checked;
      o.skipped += r.skipped;
    }
    o.passed = o.checked > 0 && o.max_relative_error <= options.tolerance;
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

std::vector<std::vector<TokenList>> tfidf_oracle_corpora() {
  return {
      {{"switch", "outage", "switch"}, {"outage", "billing"}, {"leak"}},
      {{"a", "b"}, {"a"}, {"a", "c", "c", "c"}, {"d", "b", "a", "a"}, {"e"}},
      {{"atm", "stop", "atm", "stop", "atm"}, {"stop"}, {"leak", "crime", "atm"}, {"unseen"}},
  };
}

std::vector<double> tfidf_brute_force(const TokenList& doc, const std::vector<TokenList>& corpus,
                                      const Vocabulary& vocab) {
  std::vector<double> v(vocab.size(), 0.0);
  const double n = static_cast<double>(corpus.size());
  for (std::size_t id = Vocabulary::kReserved; id < vocab.size(); ++id) {
    const auto& term = vocab.token(static_cast<TokenId>(id));
    const auto count = std::count(doc.begin(), doc.end(), term);
    if (count == 0) continue;
    double df = 0.0;
    for (const auto& d : corpus) {
      if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
    }
    const double tf = static_cast<double>(count) / static_cast<double>(doc.size());
    v[id] = tf * (std::log((1.0 + n) / (1.0 + df)) + 1.0);
  }
  double norm = 0.0;
  for (auto x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& x : v) x /= norm;
  }
  return v;
}

CheckOutcome run_tfidf_oracle_check() {
  CheckOutcome o{"tfidf_oracle", 0.0, 0, 0, 0, true};
  const auto corpora = tfidf_oracle_corpora();
  for (std::size_t k = 0; k < corpora.size(); ++k) {
    const auto& corpus = corpora[k];
    // The last corpus drops singletons, so its documents carry unknown tokens.
    const auto vocab = Vocabulary::build(corpus, k + 1 == corpora.size() ? 2 : 1);
    const auto model = fit_tfidf(corpus, vocab);
    for (const auto& doc : corpus) {
      const auto got = tfidf_transform(doc, model);
      const auto want = tfidf_brute_force(doc, corpus, vocab);
      for (std::size_t i = 0; i < got.size(); ++i) {
        o.max_relative_error = std::max(o.max_relative_error, std::abs(got[i] - want[i]));
        ++o.checked;
      }
    }
    ++o.seeds;
  }
  o.passed = o.max_relative_error <= 1e-12;
  return o;
}

}  // namespace faultclass
