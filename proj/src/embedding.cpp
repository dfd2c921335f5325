/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "faultclass/numfmt.hpp"
#include "faultclass/rng.hpp"
#include "faultclass/kernels.hpp"

namespace faultclass {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;

// Loss and gradient factor of one logistic pair term, sharing one exp.
struct PairTerm {
  double loss;      // -log sigma(score) for positives, -log sigma(-score) for negatives
  double residual;  // label - sigma(score)
};

PairTerm pair_term(double score, bool positive) {
  const double e = std::exp(-std::abs(score));
  const double l1p = std::log1p(e);
  const double sig = score >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  if (positive) return {score >= 0 ? l1p : l1p - score, 1.0 - sig};
  return {score >= 0 ? l1p + score : l1p, -sig};
}

// Walker alias sampler over ids weighted by count^0.75; O(1) per draw.
class UnigramSampler {
 public:
  explicit UnigramSampler(const std::vector<std::size_t>& counts) {
    std::vector<double> weight;
    double total = 0.0;
    for (std::size_t id = 0; id < counts.size(); ++id) {
      if (counts[id] == 0) continue;
      ids_.push_back(static_cast<TokenId>(id));
      weight.push_back(std::pow(static_cast<double>(counts[id]), 0.75));
      total += weight.back();
    }
    const std::size_t n = ids_.size();
    prob_.assign(n, 1.0);
    alias_.resize(n);
    std::iota(alias_.begin(), alias_.end(), std::size_t{0});
    std::vector<std::size_t> small;
    std::vector<std::size_t> large;
    for (std::size_t i = 0; i < n; ++i) {
      weight[i] *= static_cast<double>(n) / total;
      (weight[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = weight[s];
      alias_[s] = l;
      weight[l] -= 1.0 - weight[s];
      if (weight[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
  }

  TokenId sample(CounterRng& rng) const {
    const double u = rng.uniform() * static_cast<double>(ids_.size());
    const auto bucket = std::min(static_cast<std::size_t>(u), ids_.size() - 1);
    const double frac = u - static_cast<double>(bucket);
    return ids_[frac < prob_[bucket] ? bucket : alias_[bucket]];
  }

 private:
  std::vector<TokenId> ids_;
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

}  // namespace

void SkipGramConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("skip-gram dim must be >= 1");
  if (window < 1) throw std::invalid_argument("skip-gram window must be >= 1");
  if (negatives < 1) throw std::invalid_argument("skip-gram negatives must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("skip-gram learning rate must be > 0");
}

EmbeddingMatrix init_embeddings(std::size_t rows, const SkipGramConfig& cfg) {
  cfg.validate();
  EmbeddingMatrix m{rows, cfg.dim, std::vector<double>(rows * cfg.dim, 0.0)};
  CounterRng rng(mix_seed(cfg.seed, kInitStream));
  const double bound = 0.5 / static_cast<double>(cfg.dim);
  for (std::size_t i = cfg.dim; i < m.values.size(); ++i) m.values[i] = rng.uniform(-bound, bound);
  return m;
}

SkipGramResult train_skipgram(std::span<const std::vector<TokenId>> docs, const Vocabulary& vocab,
                              const SkipGramConfig& cfg) {
  cfg.validate();
  const std::size_t rows = vocab.size();
  const std::size_t dim = cfg.dim;

  // Documents reduced to their non-reserved ids.
  std::vector<std::vector<TokenId>> corpus;
  std::vector<std::size_t> counts(rows, 0);
  std::size_t n_tokens = 0;
  for (const auto& doc : docs) {
    std::vector<TokenId> kept;
    for (const auto id : doc) {
      if (id < 0 || static_cast<std::size_t>(id) >= rows) {
        throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
      }
      if (static_cast<std::size_t>(id) < Vocabulary::kReserved) continue;
      kept.push_back(id);
      ++counts[static_cast<std::size_t>(id)];
    }
    n_tokens += kept.size();
    if (!kept.empty()) corpus.push_back(std::move(kept));
  }
  if (n_tokens == 0) throw std::invalid_argument("skip-gram corpus has no usable tokens");

  SkipGramResult result{init_embeddings(rows, cfg), {}};
  auto& input = result.embeddings.values;
  std::vector<double> output(rows * dim, 0.0);
  const UnigramSampler sampler(counts);
  CounterRng rng(mix_seed(cfg.seed, kTrainStream));

  const double total_centers = static_cast<double>(n_tokens * cfg.epochs);
  std::size_t processed = 0;
  std::vector<double> center_update(dim);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t pairs = 0;
    for (const auto& doc : corpus) {
      for (std::size_t pos = 0; pos < doc.size(); ++pos) {
        const double lr =
            cfg.learning_rate * std::max(1e-4, 1.0 - static_cast<double>(processed) / total_centers);
        ++processed;
        double* center = input.data() + static_cast<std::size_t>(doc[pos]) * dim;
        const std::size_t lo = pos >= cfg.window ? pos - cfg.window : 0;
        const std::size_t hi = std::min(doc.size() - 1, pos + cfg.window);
        for (std::size_t ctx = lo; ctx <= hi; ++ctx) {
          if (ctx == pos) continue;
          const TokenId context = doc[ctx];
          std::fill(center_update.begin(), center_update.end(), 0.0);
          double pair_loss = 0.0;
          for (std::size_t k = 0; k <= cfg.negatives; ++k) {
            TokenId target = context;
            double label = 1.0;
            if (k > 0) {
              target = sampler.sample(rng);
              if (target == context) continue;
              label = 0.0;
            }
            double* out = output.data() + static_cast<std::size_t>(target) * dim;
            const PairTerm term = pair_term(nn::dot(center, out, dim), label > 0.0);
            pair_loss += term.loss;
            const double g = term.residual * lr;
            nn::axpy(dim, g, out, center_update.data());
            nn::axpy(dim, g, center, out);
          }
          for (std::size_t d = 0; d < dim; ++d) center[d] += center_update[d];
          epoch_loss += pair_loss;
          ++pairs;
        }
      }
    }
    result.epoch_loss.push_back(pairs > 0 ? epoch_loss / static_cast<double>(pairs) : 0.0);
  }
  std::fill(input.begin(), input.begin() + static_cast<std::ptrdiff_t>(dim), 0.0);
  return result;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity dimension mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<std::pair<std::string, double>> nearest_neighbors(std::string_view token,
                                                              std::size_t m,
                                                              const EmbeddingMatrix& matrix,
                                                              const Vocabulary& vocab) {
  if (!vocab.contains(token)) {
    throw std::invalid_argument("unknown token '" + std::string(token) + "'");
  }
  const auto query = static_cast<std::size_t>(vocab.id_of(token));
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t id = Vocabulary::kReserved; id < matrix.rows; ++id) {
    if (id == query) continue;
    scored.emplace_back(cosine_similarity(matrix.row(query), matrix.row(id)), id);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  scored.resize(std::min(m, scored.size()));
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [sim, id] : scored) {
    out.emplace_back(vocab.token(static_cast<TokenId>(id)), sim);
  }
  return out;
}

void write_embeddings_csv(std::ostream& out, const EmbeddingMatrix& matrix,
                          const Vocabulary& vocab) {
  for (std::size_t id = 0; id < matrix.rows; ++id) {
    out << vocab.token(static_cast<TokenId>(id));
    for (auto v : matrix.row(id)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace faultclass
