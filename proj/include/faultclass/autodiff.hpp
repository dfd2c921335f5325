/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "faultclass/rng.hpp"
#include "faultclass/tensor.hpp"
#include "faultclass/text.hpp"

namespace faultclass::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  const Tape* tape = nullptr;
  std::size_t id = 0;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Records forward values in execution order; backward() walks the records
/// in reverse once, calling each one's backward function with its output
/// gradient. A Tape belongs to one thread and one forward/backward pass.
class Tape {
 public:
  /// Receives the gradient of this record's output.
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Leaf with gradient, owning its value.
  Var variable(Tensor value);
  /// Leaf without gradient that borrows `value`; it must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf with gradient that borrows `value`; it must outlive the tape.
  Var parameter(const Tensor& value);

  /// Records an op output. The record requires a gradient iff any input does;
  /// `backward` is only kept in that case.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient accumulated into `v` by backward(); zeros if none reached it.
  Tensor grad(Var v) const;
  /// Zero-initialized accumulation buffer for `v`, for use inside Backward.
  Tensor& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and runs every reachable record once. Throws
  /// TapeError if `loss` is foreign to this tape, not a single element, or
  /// backward already ran.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;

    const Tensor& value() const { return borrowed != nullptr ? *borrowed : owned; }
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

enum class Mode { train, infer };

/// y = x W + b. x is [B x I] (or [I], giving [O]), W is [I x O], b is [O].
/// Zero entries of x are skipped, which makes sparse TF-IDF inputs cheap.
Var affine(Tape& tape, Var x, Var weight, Var bias);

/// max(0, x); the subgradient at 0 is 0.
Var relu(Tape& tape, Var x);

/// Inverted dropout. Train mode zeroes each element with probability p and
/// scales survivors by 1 / (1 - p); infer mode is the identity. Throws
/// std::invalid_argument unless 0 <= p < 1.
Var dropout(Tape& tape, Var x, double p, Mode mode, CounterRng& rng);

/// Rows of `table` ([V x D]) selected by `ids`, giving [ids.size() x D].
/// PAD (id 0) always maps to a zero row and never receives gradient.
Var embedding(Tape& tape, Var table, std::span<const TokenId> ids);

struct ConvFilter {
  Var weight;  // [w x D x F]
  Var bias;    // [F]
};

/// Valid cross-correlation over time:
///   out[t, f] = sum_{u, d} seq[t + u, d] * weight[u, d, f] + bias[f]
/// seq is [T x D]; output is [(T - w + 1) x F]. Throws ShapeError if T < w.
Var conv1d(Tape& tape, Var seq, const ConvFilter& filter);
std::vector<Var> conv1d_bank(Tape& tape, Var seq, std::span<const ConvFilter> filters);

/// Column-wise max of [T x F], giving [F]. Gradient goes to the lowest
/// maximizing row of each column.
Var max_over_time(Tape& tape, Var features);

/// Concatenates rank-1 tensors.
Var concat(Tape& tape, std::span<const Var> parts);
/// Stacks equal-length rank-1 tensors into [n x F].
Var stack_rows(Tape& tape, std::span<const Var> rows);

struct LstmParams {
  Var w_input;   // [D x 4H], gate blocks ordered input, forget, candidate, output
  Var w_hidden;  // [H x 4H]
  Var bias;      // [4H]
};

/// Runs the LSTM over rows 0 .. true_length-1 of seq ([T x D]) and returns
/// the hidden state after the last of them. Rows at or past true_length are
/// never read. Throws std::invalid_argument unless 1 <= true_length <= T.
Var lstm_sequence(Tape& tape, Var seq, std::size_t true_length, const LstmParams& params,
                  Var h0, Var c0);

/// Runs the LSTM from zero state over every row of each seqs[b] ([T_b x D])
/// and returns the final hidden states as [B x H]. An empty sequence gives a
/// zero row. Results match lstm_sequence per sequence up to rounding.
Var lstm_batch(Tape& tape, std::span<const Var> seqs, const LstmParams& params);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

struct CrossEntropy {
  Var loss;      // scalar, mean over rows
  Tensor probs;  // same shape as logits
};

/// logits is [C] with one label or [B x C] with B labels. Throws
/// std::invalid_argument for out-of-range labels.
CrossEntropy softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels);

Var sum(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
/// sum_i x[i] * weights[i]; turns any tensor into a scalar for gradient checks.
Var weighted_sum(Tape& tape, Var x, Tensor weights);

}  // namespace faultclass::nn
