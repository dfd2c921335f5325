/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "faultclass/autodiff.hpp"

namespace faultclass::nn {

/// Builds a scalar on `tape` from leaves holding the current point.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-6;
  /// A coordinate is skipped as a kink when its one-sided differences
  /// disagree by more than this (relative to max(1, |slopes|)).
  double kink_threshold = 1e-4;
  /// Multiplies the analytic gradient before comparison. Test hook only.
  double analytic_scale = 1.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;
};

/// Compares reverse-mode gradients of `fn` at `point` against central
/// differences. The per-coordinate error is
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult gradient_check(const ScalarFn& fn, std::vector<Tensor> point,
                               const GradCheckOptions& options = {});

}  // namespace faultclass::nn
