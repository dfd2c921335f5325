/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "faultclass/text.hpp"

namespace faultclass {

struct SelfCheckOptions {
  std::size_t seeds = 20;
  double step = 1e-6;
  double tolerance = 1e-6;
  /// Scales every analytic gradient; anything but 1 must make the suite fail.
  double analytic_scale = 1.0;
};

struct CheckOutcome {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t seeds = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;
};

/// Finite-difference checks of every differentiable op and of the mlp, cnn
/// and rnn training losses on small random instances, one instance per seed.
std::vector<CheckOutcome> run_gradient_suite(const SelfCheckOptions& options = {});

/// Three small hand-built corpora used by the TF-IDF oracle check.
std::vector<std::vector<TokenList>> tfidf_oracle_corpora();

/// Direct evaluation of the TF-IDF formulas for `doc` over `vocab`, with
/// document frequencies counted by scanning `corpus`.
std::vector<double> tfidf_brute_force(const TokenList& doc, const std::vector<TokenList>& corpus,
                                      const Vocabulary& vocab);

/// Compares tfidf_transform with tfidf_brute_force on every document of the
/// oracle corpora; passes when no component differs by more than 1e-12.
CheckOutcome run_tfidf_oracle_check();

}  // namespace faultclass
