/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace faultclass::nn {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const auto& t : point) inputs.push_back(tape.constant(t));
  return tape.value(fn(tape, inputs)).item();
}

}  // namespace

GradCheckResult gradient_check(const ScalarFn& fn, std::vector<Tensor> point,
                               const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> inputs;
    for (const auto& t : point) inputs.push_back(tape.variable(t));
    const Var out = fn(tape, inputs);
    tape.backward(out);
    for (const auto& v : inputs) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  const double h = options.step;
  const double center = evaluate(fn, point);
  for (std::size_t k = 0; k < point.size(); ++k) {
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double original = point[k][i];
      point[k][i] = original + h;
      const double plus = evaluate(fn, point);
      point[k][i] = original - h;
      const double minus = evaluate(fn, point);
      point[k][i] = original;

      const double right = (plus - center) / h;
      const double left = (center - minus) / h;
      const double numeric = (plus - minus) / (2.0 * h);
      if (std::abs(right - left) >
          options.kink_threshold * std::max({1.0, std::abs(right), std::abs(left)})) {
        ++result.skipped;
        continue;
      }
      const double a = analytic[k][i] * options.analytic_scale;
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.checked;
    }
  }
  result.passed = result.max_relative_error <= options.tolerance;
  return result;
}

}  // namespace faultclass::nn
