/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "faultclass/kernels.hpp"

namespace faultclass::nn {

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw TapeError("variable is not on this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size()) throw TapeError("variable is not on this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, false, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, true, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  nodes_.push_back(Node{{}, &value, {}, false, false, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value) {
  nodes_.push_back(Node{{}, &value, {}, false, true, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  if (backward_done_) throw TapeError("cannot record after backward");
  bool needs = false;
  for (const auto& in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, needs,
                        needs ? std::move(backward) : Backward{}});
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
  const auto& n = node(v);
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value());
}

Tensor& Tape::grad_buffer(Var v) {
  auto& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor(n.value().shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  auto& root = node(loss);
  if (backward_done_) throw TapeError("backward already ran on this tape");
  if (root.value().size() != 1) throw TapeError("loss must be a single element");
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var affine(Tape& tape, Var x, Var weight, Var bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  const auto& bv = tape.value(bias);
  require_rank(wv, 2, "affine weight");
  require_rank(bv, 1, "affine bias");
  if (xv.rank() != 1 && xv.rank() != 2) throw ShapeError("affine input must have rank 1 or 2");
  const std::size_t in = wv.dim(0);
  const std::size_t out = wv.dim(1);
  const std::size_t batch = xv.rank() == 2 ? xv.dim(0) : 1;
  if (xv.shape().back() != in || bv.dim(0) != out) {
    throw ShapeError("affine shape mismatch: x " + to_string(xv.shape()) + ", W " +
                     to_string(wv.shape()) + ", b " + to_string(bv.shape()));
  }
  Tensor y(xv.rank() == 2 ? Shape{batch, out} : Shape{out});
  const double* xd = xv.data().data();
  const double* wd = wv.data().data();
  double* yd = y.data().data();
  for (std::size_t r = 0; r < batch; ++r) {
    double* yr = yd + r * out;
    std::copy(bv.data().begin(), bv.data().end(), yr);
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xd[r * in + i];
      if (a == 0.0) continue;
      const double* wr = wd + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += a * wr[o];
    }
  }
  return tape.record(std::move(y), {x, weight, bias},
                     [x, weight, bias, batch, in, out](Tape& t, const Tensor& gy) {
                       const double* g = gy.data().data();
                       const double* xd = t.value(x).data().data();
                       const double* wd = t.value(weight).data().data();
                       if (t.requires_grad(x)) {
                         double* gx = t.grad_buffer(x).data().data();
                         for (std::size_t r = 0; r < batch; ++r) {
                           for (std::size_t i = 0; i < in; ++i) {
                             const double* wr = wd + i * out;
                             gx[r * in + i] += dot(g + r * out, wr, out);
                           }
                         }
                       }
                       if (t.requires_grad(weight)) {
                         double* gw = t.grad_buffer(weight).data().data();
                         for (std::size_t r = 0; r < batch; ++r) {
                           for (std::size_t i = 0; i < in; ++i) {
                             const double a = xd[r * in + i];
                             if (a == 0.0) continue;
                             double* gwr = gw + i * out;
                             for (std::size_t o = 0; o < out; ++o) gwr[o] += a * g[r * out + o];
                           }
                         }
                       }
                       if (t.requires_grad(bias)) {
                         double* gb = t.grad_buffer(bias).data().data();
                         for (std::size_t r = 0; r < batch; ++r) {
                           for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
                         }
                       }
                     });
}

Var relu(Tape& tape, Var x) {
  Tensor y = tape.value(x);
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(y), {x}, [x](Tape& t, const Tensor& gy) {
    const auto& xv = t.value(x);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var dropout(Tape& tape, Var x, double p, Mode mode, CounterRng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (mode == Mode::infer || p == 0.0) {
    return tape.record(tape.value(x), {x}, [x](Tape& t, const Tensor& gy) {
      auto& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y = tape.value(x);
  auto mask = std::make_shared<std::vector<double>>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    y[i] *= (*mask)[i];
  }
  return tape.record(std::move(y), {x}, [x, mask](Tape& t, const Tensor& gy) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (*mask)[i];
  });
}

Var embedding(Tape& tape, Var table, std::span<const TokenId> ids) {
  const auto& tv = tape.value(table);
  require_rank(tv, 2, "embedding table");
  const std::size_t rows = tv.dim(0);
  const std::size_t dim = tv.dim(1);
  Tensor y(Shape{ids.size(), dim});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto id = static_cast<std::size_t>(ids[k]);
    if (ids[k] < 0 || id >= rows) throw ShapeError("embedding id out of range");
    if (ids[k] == Vocabulary::kPad) continue;  // PAD embeds to zero
    auto src = tv.row(id);
    std::copy(src.begin(), src.end(), y.row(k).begin());
  }
  std::vector<TokenId> kept(ids.begin(), ids.end());
  return tape.record(std::move(y), {table},
                     [table, kept = std::move(kept), dim](Tape& t, const Tensor& gy) {
                       auto& gt = t.grad_buffer(table);
                       for (std::size_t k = 0; k < kept.size(); ++k) {
                         if (kept[k] == Vocabulary::kPad) continue;
                         double* dst = gt.data().data() + static_cast<std::size_t>(kept[k]) * dim;
                         const double* src = gy.data().data() + k * dim;
                         for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
                       }
                     });
}

Var conv1d(Tape& tape, Var seq, const ConvFilter& filter) {
  const auto& sv = tape.value(seq);
  const auto& wv = tape.value(filter.weight);
  const auto& bv = tape.value(filter.bias);
  require_rank(sv, 2, "conv1d sequence");
  require_rank(wv, 3, "conv1d filter");
  require_rank(bv, 1, "conv1d bias");
  const std::size_t steps = sv.dim(0);
  const std::size_t dim = sv.dim(1);
  const std::size_t width = wv.dim(0);
  const std::size_t maps = wv.dim(2);
  if (wv.dim(1) != dim || bv.dim(0) != maps) {
    throw ShapeError("conv1d shape mismatch: seq " + to_string(sv.shape()) + ", filter " +
                     to_string(wv.shape()) + ", bias " + to_string(bv.shape()));
  }
  if (width == 0) throw ShapeError("conv1d filter width must be >= 1");
  if (steps < width) {
    throw ShapeError("sequence of length " + std::to_string(steps) +
                     " is shorter than filter width " + std::to_string(width));
  }
  const std::size_t out_steps = steps - width + 1;
  Tensor y(Shape{out_steps, maps});
  const double* sd = sv.data().data();
  const double* wd = wv.data().data();
  for (std::size_t t = 0; t < out_steps; ++t) {
    std::copy(bv.data().begin(), bv.data().end(), y.data().data() + t * maps);
  }
  // Window rows t..t+w-1 are contiguous, so the windows are overlapping rows of stride D.
  gemm_acc(out_steps, maps, width * dim, sd, dim, wd, maps, y.data().data(), maps);
  const Var weight = filter.weight;
  const Var bias = filter.bias;
  return tape.record(
      std::move(y), {seq, weight, bias},
      [seq, weight, bias, out_steps, dim, width, maps](Tape& t, const Tensor& gy) {
        const double* sd = t.value(seq).data().data();
        const double* wd = t.value(weight).data().data();
        double* gs = t.requires_grad(seq) ? t.grad_buffer(seq).data().data() : nullptr;
        double* gw = t.requires_grad(weight) ? t.grad_buffer(weight).data().data() : nullptr;
        double* gb = t.requires_grad(bias) ? t.grad_buffer(bias).data().data() : nullptr;
        const std::size_t span = width * dim;
        // Max pooling leaves most of gy zero, so only non-zero entries are visited.
        for (std::size_t s = 0; s < out_steps; ++s) {
          const double* g = gy.data().data() + s * maps;
          const double* window = sd + s * dim;
          for (std::size_t f = 0; f < maps; ++f) {
            const double gf = g[f];
            if (gf == 0.0) continue;
            if (gb != nullptr) gb[f] += gf;
            if (gs != nullptr) {
              double* gsr = gs + s * dim;
              for (std::size_t k = 0; k < span; ++k) gsr[k] += wd[k * maps + f] * gf;
            }
            if (gw != nullptr) {
              for (std::size_t k = 0; k < span; ++k) gw[k * maps + f] += window[k] * gf;
            }
          }
        }
      });
}

std::vector<Var> conv1d_bank(Tape& tape, Var seq, std::span<const ConvFilter> filters) {
  std::vector<Var> out;
  out.reserve(filters.size());
  for (const auto& f : filters) out.push_back(conv1d(tape, seq, f));
  return out;
}

Var max_over_time(Tape& tape, Var features) {
  const auto& fv = tape.value(features);
  require_rank(fv, 2, "max_over_time input");
  const std::size_t steps = fv.dim(0);
  const std::size_t maps = fv.dim(1);
  if (steps == 0) throw ShapeError("max_over_time over an empty time axis");
  Tensor y(Shape{maps});
  std::vector<std::size_t> argmax(maps, 0);
  for (std::size_t f = 0; f < maps; ++f) y[f] = fv.at(0, f);
  for (std::size_t s = 1; s < steps; ++s) {
    for (std::size_t f = 0; f < maps; ++f) {
      if (fv.at(s, f) > y[f]) {
        y[f] = fv.at(s, f);
        argmax[f] = s;
      }
    }
  }
  return tape.record(std::move(y), {features},
                     [features, argmax = std::move(argmax), maps](Tape& t, const Tensor& gy) {
                       auto& g = t.grad_buffer(features);
                       for (std::size_t f = 0; f < maps; ++f) g[argmax[f] * maps + f] += gy[f];
                     });
}

Var concat(Tape& tape, std::span<const Var> parts) {
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(tape.value(p), 1, "concat part");
    sizes.push_back(tape.value(p).size());
    total += sizes.back();
  }
  Tensor y(Shape{total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = tape.value(p);
    std::copy(v.data().begin(), v.data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(y), parts, [inputs, sizes](Tape& t, const Tensor& gy) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (t.requires_grad(inputs[k])) {
        auto& g = t.grad_buffer(inputs[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += gy[offset + i];
      }
      offset += sizes[k];
    }
  });
}

Var stack_rows(Tape& tape, std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows of nothing");
  const std::size_t width = tape.value(rows[0]).size();
  Tensor y(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& v = tape.value(rows[r]);
    require_rank(v, 1, "stacked row");
    if (v.size() != width) throw ShapeError("stack_rows with rows of different length");
    std::copy(v.data().begin(), v.data().end(), y.row(r).begin());
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return tape.record(std::move(y), rows, [inputs, width](Tape& t, const Tensor& gy) {
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      if (!t.requires_grad(inputs[r])) continue;
      auto& g = t.grad_buffer(inputs[r]);
      for (std::size_t i = 0; i < width; ++i) g[i] += gy[r * width + i];
    }
  });
}

namespace {

// Per-step activations kept for the backward pass.
struct LstmCache {
  std::size_t steps = 0;
  std::size_t hidden = 0;
  std::vector<double> gates;   // [steps x 4H], post-activation i, f, g, o
  std::vector<double> cells;   // [(steps + 1) x H], row 0 = c0
  std::vector<double> hiddens; // [(steps + 1) x H], row 0 = h0
  std::vector<double> tanh_c;  // [steps x H]
};

struct BatchCache {
  std::vector<std::size_t> order;   // slot -> sequence index
  std::vector<std::size_t> active;  // per step, number of running slots
  std::size_t hidden = 0;
  std::size_t batch = 0;
  std::vector<double> gates;    // [steps x B x 4H]
  std::vector<double> cells;    // [(steps + 1) x B x H]
  std::vector<double> hiddens;  // [(steps + 1) x B x H]
  std::vector<double> tanh_c;   // [steps x B x H]
};


// Activates z = [i f g o] pre-activations in place and advances the cell.
void lstm_cell_forward(double* z, const double* cp, double* cn, double* hn, double* tc,
                       std::size_t hidden) {
  for (std::size_t k = 0; k < hidden; ++k) {
    const double ig = sigmoid(z[k]);
    const double fg = sigmoid(z[hidden + k]);
    const double cand = std::tanh(z[2 * hidden + k]);
    const double og = sigmoid(z[3 * hidden + k]);
    z[k] = ig;
    z[hidden + k] = fg;
    z[2 * hidden + k] = cand;
    z[3 * hidden + k] = og;
    cn[k] = fg * cp[k] + ig * cand;
    tc[k] = std::tanh(cn[k]);
    hn[k] = og * tc[k];
  }
}

// Gate pre-activation gradients for one step; dc is carried to the previous step.
void lstm_cell_backward(const double* gate, const double* cp, const double* tc, const double* dh,
                        double* dc, double* dz, std::size_t hidden) {
  for (std::size_t k = 0; k < hidden; ++k) {
    const double ig = gate[k];
    const double fg = gate[hidden + k];
    const double cand = gate[2 * hidden + k];
    const double og = gate[3 * hidden + k];
    const double dc_k = dc[k] + dh[k] * og * (1.0 - tc[k] * tc[k]);
    dz[k] = dc_k * cand * ig * (1.0 - ig);
    dz[hidden + k] = dc_k * cp[k] * fg * (1.0 - fg);
    dz[2 * hidden + k] = dc_k * ig * (1.0 - cand * cand);
    dz[3 * hidden + k] = dh[k] * tc[k] * og * (1.0 - og);
    dc[k] = dc_k * fg;
  }
}

}  // namespace

Var lstm_sequence(Tape& tape, Var seq, std::size_t true_length, const LstmParams& params,
                  Var h0, Var c0) {
  const auto& sv = tape.value(seq);
  const auto& wx = tape.value(params.w_input);
  const auto& wh = tape.value(params.w_hidden);
  const auto& bv = tape.value(params.bias);
  const auto& h0v = tape.value(h0);
  const auto& c0v = tape.value(c0);
  require_rank(sv, 2, "lstm sequence");
  require_rank(wx, 2, "lstm input weight");
  require_rank(wh, 2, "lstm hidden weight");
  require_rank(bv, 1, "lstm bias");
  const std::size_t dim = sv.dim(1);
  const std::size_t hidden = wh.dim(0);
  const std::size_t g4 = 4 * hidden;
  if (wx.dim(0) != dim || wx.dim(1) != g4 || wh.dim(1) != g4 || bv.dim(0) != g4 ||
      h0v.shape() != Shape{hidden} || c0v.shape() != Shape{hidden}) {
    throw ShapeError("lstm shape mismatch: seq " + to_string(sv.shape()) + ", W_x " +
                     to_string(wx.shape()) + ", W_h " + to_string(wh.shape()));
  }
  if (true_length == 0 || true_length > sv.dim(0)) {
    throw std::invalid_argument("lstm true_length must be in [1, T]");
  }

  auto cache = std::make_shared<LstmCache>();
  cache->steps = true_length;
  cache->hidden = hidden;
  cache->gates.assign(true_length * g4, 0.0);
  cache->cells.assign((true_length + 1) * hidden, 0.0);
  cache->hiddens.assign((true_length + 1) * hidden, 0.0);
  cache->tanh_c.assign(true_length * hidden, 0.0);
  std::copy(h0v.data().begin(), h0v.data().end(), cache->hiddens.begin());
  std::copy(c0v.data().begin(), c0v.data().end(), cache->cells.begin());

  const double* whd = wh.data().data();
  for (std::size_t s = 0; s < true_length; ++s) {
    std::copy(bv.data().begin(), bv.data().end(), cache->gates.data() + s * g4);
  }
  // Input projections do not depend on the recurrence, so they run as one product.
  gemm_acc(true_length, g4, dim, sv.data().data(), dim, wx.data().data(), g4, cache->gates.data(),
           g4);
  for (std::size_t s = 0; s < true_length; ++s) {
    double* z = cache->gates.data() + s * g4;
    const double* hp = cache->hiddens.data() + s * hidden;
    for (std::size_t k = 0; k < hidden; ++k) {
      const double a = hp[k];
      if (a == 0.0) continue;
      axpy(g4, a, whd + k * g4, z);
    }
    const double* cp = cache->cells.data() + s * hidden;
    double* cn = cache->cells.data() + (s + 1) * hidden;
    double* hn = cache->hiddens.data() + (s + 1) * hidden;
    double* tc = cache->tanh_c.data() + s * hidden;
    lstm_cell_forward(z, cp, cn, hn, tc, hidden);
  }
  Tensor out(Shape{hidden});
  std::copy(cache->hiddens.begin() + static_cast<std::ptrdiff_t>(true_length * hidden),
            cache->hiddens.end(), out.data().begin());

  const Var wxv = params.w_input;
  const Var whv = params.w_hidden;
  const Var biv = params.bias;
  return tape.record(
      std::move(out), {seq, wxv, whv, biv, h0, c0},
      [seq, wxv, whv, biv, h0, c0, cache, dim](Tape& t, const Tensor& gy) {
        const std::size_t hidden = cache->hidden;
        const std::size_t g4 = 4 * hidden;
        const double* sd = t.value(seq).data().data();
        const double* wxd = t.value(wxv).data().data();
        const double* whd = t.value(whv).data().data();
        double* gseq = t.requires_grad(seq) ? t.grad_buffer(seq).data().data() : nullptr;
        double* gwx = t.requires_grad(wxv) ? t.grad_buffer(wxv).data().data() : nullptr;
        double* gwh = t.requires_grad(whv) ? t.grad_buffer(whv).data().data() : nullptr;
        double* gb = t.requires_grad(biv) ? t.grad_buffer(biv).data().data() : nullptr;

        const std::size_t steps = cache->steps;
        std::vector<double> dh(gy.data().begin(), gy.data().end());
        std::vector<double> dc(hidden, 0.0);
        std::vector<double> dz_all(steps * g4, 0.0);
        std::vector<double> dh_prev(hidden, 0.0);
        for (std::size_t s = steps; s-- > 0;) {
          const double* gate = cache->gates.data() + s * g4;
          const double* cp = cache->cells.data() + s * hidden;
          const double* tc = cache->tanh_c.data() + s * hidden;
          double* dz = dz_all.data() + s * g4;
          lstm_cell_backward(gate, cp, tc, dh.data(), dc.data(), dz, hidden);
          for (std::size_t k = 0; k < hidden; ++k) dh_prev[k] = dot(whd + k * g4, dz, g4);
          dh.swap(dh_prev);
        }
        // Parameter and input gradients only need the stored gate gradients.
        if (gb != nullptr) {
          for (std::size_t s = 0; s < steps; ++s) {
            const double* dz = dz_all.data() + s * g4;
            for (std::size_t j = 0; j < g4; ++j) gb[j] += dz[j];
          }
        }
        std::vector<double> scratch;
        if (gwx != nullptr) {
          scratch.resize(dim * steps);
          transpose(sd, steps, dim, scratch.data());
          gemm_acc(dim, g4, steps, scratch.data(), steps, dz_all.data(), g4, gwx, g4);
        }
        if (gwh != nullptr) {
          scratch.resize(hidden * steps);
          transpose(cache->hiddens.data(), steps, hidden, scratch.data());
          gemm_acc(hidden, g4, steps, scratch.data(), steps, dz_all.data(), g4, gwh, g4);
        }
        if (gseq != nullptr) {
          scratch.resize(g4 * dim);
          transpose(wxd, dim, g4, scratch.data());
          gemm_acc(steps, dim, g4, dz_all.data(), g4, scratch.data(), dim, gseq, dim);
        }
        if (t.requires_grad(h0)) {
          auto& g = t.grad_buffer(h0);
          for (std::size_t k = 0; k < hidden; ++k) g[k] += dh[k];
        }
        if (t.requires_grad(c0)) {
          auto& g = t.grad_buffer(c0);
          for (std::size_t k = 0; k < hidden; ++k) g[k] += dc[k];
        }
      });
}

Var lstm_batch(Tape& tape, std::span<const Var> seqs, const LstmParams& params) {
  const auto& wx = tape.value(params.w_input);
  const auto& wh = tape.value(params.w_hidden);
  const auto& bv = tape.value(params.bias);
  require_rank(wx, 2, "lstm input weight");
  require_rank(wh, 2, "lstm hidden weight");
  require_rank(bv, 1, "lstm bias");
  const std::size_t dim = wx.dim(0);
  const std::size_t hidden = wh.dim(0);
  const std::size_t g4 = 4 * hidden;
  if (wx.dim(1) != g4 || wh.dim(1) != g4 || bv.dim(0) != g4) {
    throw ShapeError("lstm shape mismatch: W_x " + to_string(wx.shape()) + ", W_h " +
                     to_string(wh.shape()) + ", bias " + to_string(bv.shape()));
  }
  const std::size_t batch = seqs.size();
  if (batch == 0) throw ShapeError("lstm_batch needs at least one sequence");

  // Slot j holds sequence order[j]; longest first, so the sequences still
  // running at any step occupy a prefix of the slots.
  auto cache = std::make_shared<BatchCache>();
  cache->order.resize(batch);
  std::iota(cache->order.begin(), cache->order.end(), std::size_t{0});
  std::vector<std::size_t> length(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& sv = tape.value(seqs[b]);
    require_rank(sv, 2, "lstm sequence");
    if (sv.dim(1) != dim) {
      throw ShapeError("lstm sequence " + to_string(sv.shape()) + " does not match W_x " +
                       to_string(wx.shape()));
    }
    length[b] = sv.dim(0);
  }
  std::stable_sort(cache->order.begin(), cache->order.end(),
                   [&](std::size_t x, std::size_t y) { return length[x] > length[y]; });
  const std::size_t steps = length[cache->order[0]];
  cache->active.resize(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    std::size_t a = 0;
    while (a < batch && length[cache->order[a]] > s) ++a;
    cache->active[s] = a;
  }
  cache->hidden = hidden;
  cache->batch = batch;
  cache->gates.assign(steps * batch * g4, 0.0);
  cache->cells.assign((steps + 1) * batch * hidden, 0.0);
  cache->hiddens.assign((steps + 1) * batch * hidden, 0.0);
  cache->tanh_c.assign(steps * batch * hidden, 0.0);

  const std::size_t gate_stride = batch * g4;
  const std::size_t state_stride = batch * hidden;
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < cache->active[s]; ++j) {
      std::copy(bv.data().begin(), bv.data().end(), cache->gates.data() + s * gate_stride + j * g4);
    }
  }
  for (std::size_t j = 0; j < batch; ++j) {
    const auto& sv = tape.value(seqs[cache->order[j]]);
    gemm_acc(sv.dim(0), g4, dim, sv.data().data(), dim, wx.data().data(), g4,
             cache->gates.data() + j * g4, gate_stride);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t a = cache->active[s];
    double* z = cache->gates.data() + s * gate_stride;
    const double* hp = cache->hiddens.data() + s * state_stride;
    gemm_acc(a, g4, hidden, hp, hidden, wh.data().data(), g4, z, g4);
    const double* cp = cache->cells.data() + s * state_stride;
    double* cn = cache->cells.data() + (s + 1) * state_stride;
    double* hn = cache->hiddens.data() + (s + 1) * state_stride;
    double* tc = cache->tanh_c.data() + s * state_stride;
    for (std::size_t j = 0; j < a; ++j) {
      lstm_cell_forward(z + j * g4, cp + j * hidden, cn + j * hidden, hn + j * hidden,
                        tc + j * hidden, hidden);
    }
    // Finished sequences carry their state forward unchanged.
    std::copy(cp + a * hidden, cp + state_stride, cn + a * hidden);
    std::copy(hp + a * hidden, hp + state_stride, hn + a * hidden);
  }

  Tensor out(Shape{batch, hidden});
  const double* last = cache->hiddens.data() + steps * state_stride;
  for (std::size_t j = 0; j < batch; ++j) {
    std::copy(last + j * hidden, last + (j + 1) * hidden, out.row(cache->order[j]).begin());
  }

  std::vector<Var> inputs(seqs.begin(), seqs.end());
  inputs.push_back(params.w_input);
  inputs.push_back(params.w_hidden);
  inputs.push_back(params.bias);
  const std::vector<Var> seq_vars(seqs.begin(), seqs.end());
  const LstmParams p = params;
  return tape.record(std::move(out), inputs, [seq_vars, p, cache, dim, steps](Tape& t,
                                                                            const Tensor& gy) {
    const std::size_t hidden = cache->hidden;
    const std::size_t batch = cache->batch;
    const std::size_t g4 = 4 * hidden;
    const std::size_t gate_stride = batch * g4;
    const std::size_t state_stride = batch * hidden;
    const double* wxd = t.value(p.w_input).data().data();
    const double* whd = t.value(p.w_hidden).data().data();

    std::vector<double> dh(state_stride, 0.0);
    std::vector<double> dc(state_stride, 0.0);
    for (std::size_t j = 0; j < batch; ++j) {
      const auto src = gy.row(cache->order[j]);
      std::copy(src.begin(), src.end(), dh.begin() + static_cast<std::ptrdiff_t>(j * hidden));
    }
    std::vector<double> wh_t(g4 * hidden);
    transpose(whd, hidden, g4, wh_t.data());
    std::vector<double> dz_all(steps * gate_stride, 0.0);
    std::vector<double> dh_prev(state_stride, 0.0);
    for (std::size_t s = steps; s-- > 0;) {
      const std::size_t a = cache->active[s];
      const double* gate = cache->gates.data() + s * gate_stride;
      const double* cp = cache->cells.data() + s * state_stride;
      const double* tc = cache->tanh_c.data() + s * state_stride;
      double* dz = dz_all.data() + s * gate_stride;
      for (std::size_t j = 0; j < a; ++j) {
        lstm_cell_backward(gate + j * g4, cp + j * hidden, tc + j * hidden, dh.data() + j * hidden,
                           dc.data() + j * hidden, dz + j * g4, hidden);
      }
      std::fill(dh_prev.begin(), dh_prev.begin() + static_cast<std::ptrdiff_t>(a * hidden), 0.0);
      gemm_acc(a, hidden, g4, dz, g4, wh_t.data(), hidden, dh_prev.data(), hidden);
      std::copy(dh_prev.begin(), dh_prev.begin() + static_cast<std::ptrdiff_t>(a * hidden),
                dh.begin());
    }

    // Active (step, slot) pairs packed contiguously, step-major.
    std::size_t pairs = 0;
    for (std::size_t s = 0; s < steps; ++s) pairs += cache->active[s];
    std::vector<double> dz_packed(pairs * g4);
    {
      std::size_t row = 0;
      for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t a = cache->active[s];
        std::copy_n(dz_all.data() + s * gate_stride, a * g4, dz_packed.data() + row * g4);
        row += a;
      }
    }
    if (t.requires_grad(p.bias)) {
      double* gb = t.grad_buffer(p.bias).data().data();
      for (std::size_t r = 0; r < pairs; ++r) {
        for (std::size_t j = 0; j < g4; ++j) gb[j] += dz_packed[r * g4 + j];
      }
    }
    if (t.requires_grad(p.w_hidden)) {
      std::vector<double> h_t(hidden * pairs);
      std::size_t row = 0;
      for (std::size_t s = 0; s < steps; ++s) {
        const double* hp = cache->hiddens.data() + s * state_stride;
        for (std::size_t j = 0; j < cache->active[s]; ++j, ++row) {
          for (std::size_t k = 0; k < hidden; ++k) h_t[k * pairs + row] = hp[j * hidden + k];
        }
      }
      gemm_acc(hidden, g4, pairs, h_t.data(), pairs, dz_packed.data(), g4,
               t.grad_buffer(p.w_hidden).data().data(), g4);
    }
    if (t.requires_grad(p.w_input)) {
      std::vector<double> x_t(dim * pairs);
      std::size_t row = 0;
      for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t j = 0; j < cache->active[s]; ++j, ++row) {
          const double* x = t.value(seq_vars[cache->order[j]]).data().data() + s * dim;
          for (std::size_t d = 0; d < dim; ++d) x_t[d * pairs + row] = x[d];
        }
      }
      gemm_acc(dim, g4, pairs, x_t.data(), pairs, dz_packed.data(), g4,
               t.grad_buffer(p.w_input).data().data(), g4);
    }
    bool any_seq_grad = false;
    for (const Var v : seq_vars) any_seq_grad = any_seq_grad || t.requires_grad(v);
    if (any_seq_grad) {
      std::vector<double> wx_t(g4 * dim);
      transpose(wxd, dim, g4, wx_t.data());
      std::vector<double> gx(pairs * dim, 0.0);
      gemm_acc(pairs, dim, g4, dz_packed.data(), g4, wx_t.data(), dim, gx.data(), dim);
      std::size_t row = 0;
      for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t j = 0; j < cache->active[s]; ++j, ++row) {
          const Var v = seq_vars[cache->order[j]];
          if (!t.requires_grad(v)) continue;
          double* g = t.grad_buffer(v).data().data() + s * dim;
          for (std::size_t d = 0; d < dim; ++d) g[d] += gx[row * dim + d];
        }
      }
    }
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

CrossEntropy softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  const auto& lv = tape.value(logits);
  if (lv.rank() != 1 && lv.rank() != 2) throw ShapeError("logits must have rank 1 or 2");
  const std::size_t rows = lv.rank() == 2 ? lv.dim(0) : 1;
  const std::size_t classes = lv.shape().back();
  if (labels.size() != rows) {
    throw std::invalid_argument("expected " + std::to_string(rows) + " labels, got " +
                                std::to_string(labels.size()));
  }
  if (rows == 0 || classes == 0) throw ShapeError("empty logits");
  Tensor probs(lv.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes) {
      throw std::invalid_argument("label " + std::to_string(labels[r]) + " out of range for " +
                                  std::to_string(classes) + " classes");
    }
    const auto row = lv.data().subspan(r * classes, classes);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto v : row) z += std::exp(v - m);
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - m - log_z);
    }
    loss -= row[labels[r]] - m - log_z;
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> kept(labels.begin(), labels.end());
  auto probs_copy = std::make_shared<Tensor>(probs);
  const Var out = tape.record(
      Tensor::scalar(loss), {logits},
      [logits, kept = std::move(kept), probs_copy, rows, classes](Tape& t, const Tensor& gy) {
        auto& g = t.grad_buffer(logits);
        const double s = gy[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double target = c == kept[r] ? 1.0 : 0.0;
            g[r * classes + c] += s * ((*probs_copy)[r * classes + c] - target);
          }
        }
      });
  return {out, std::move(probs)};
}

Var sum(Tape& tape, Var x) {
  double total = 0.0;
  for (auto v : tape.value(x).data()) total += v;
  return tape.record(Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& gy) {
    for (auto& g : t.grad_buffer(x).data()) g += gy[0];
  });
}

Var add(Tape& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add shape mismatch: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& gy) {
    for (const Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto& g = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor y = tape.value(x);
  for (auto& v : y.data()) v *= factor;
  return tape.record(std::move(y), {x}, [x, factor](Tape& t, const Tensor& gy) {
    auto& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
  });
}

Var weighted_sum(Tape& tape, Var x, Tensor weights) {
  const auto& xv = tape.value(x);
  if (weights.size() != xv.size()) throw ShapeError("weighted_sum weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * weights[i];
  auto w = std::make_shared<Tensor>(std::move(weights));
  return tape.record(Tensor::scalar(total), {x}, [x, w](Tape& t, const Tensor& gy) {
    auto& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[0] * (*w)[i];
  });
}

}  // namespace faultclass::nn
