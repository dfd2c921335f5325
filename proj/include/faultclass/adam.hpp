/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "faultclass/tensor.hpp"

namespace faultclass::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for a fixed list of parameter tensors.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Tensor> params, AdamConfig config = {});
};

/// One bias-corrected Adam update of every parameter. Throws ShapeError when
/// params, grads and moments disagree in count or shape.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace faultclass::nn
