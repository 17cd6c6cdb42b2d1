// rlm/tape.hpp

// Copyright 2026  rlm authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>

#include "rlm/tensor.hpp"

namespace rlm {
namespace nn {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t idx = 0;
};

/// Reverse-mode tape. Records primitive tensor ops in creation order; a
/// single-threaded builder. backward() replays the record in reverse and
/// accumulates gradients for every node reachable from the loss; leaves that
/// never fed the loss keep a zero gradient.
class Tape {
 public:
  Var leaf(Tensor t) {
    bool rg = t.requires_grad;
    return push(std::move(t), rg, nullptr);
  }

  Var constant(Tensor t) {
    t.requires_grad = false;
    return push(std::move(t), false, nullptr);
  }

  const Tensor &value(Var v) const { return values_[v.idx]; }
  std::size_t size() const { return values_.size(); }

  /// Gradient of the last backward() loss w.r.t. node v (zeros if the node
  /// did not influence the loss).
  Tensor grad(Var v) const {
    const Tensor &val = values_[v.idx];
    Tensor g(val.shape());
    if (v.idx < grads_.size() && !grads_[v.idx].empty()) {
      std::copy(grads_[v.idx].begin(), grads_[v.idx].end(), g.data().begin());
    }
    return g;
  }

  // -- primitive ops --------------------------------------------------------

  Var row(Var w, std::size_t i) {
    const Tensor &wv = values_[w.idx];
    if (wv.rank() != 2 || i >= wv.rows())
      throw std::invalid_argument("Tape::row: bad index");
    Tensor out({wv.cols()});
    auto src = wv.row(i);
    std::copy(src.begin(), src.end(), out.data().begin());
    return push(std::move(out), rg_[w.idx], [w, i](Tape &t, std::uint32_t self) {
      auto g = t.grad_ref(self);
      auto gw = t.ensure_grad(w.idx);
      std::size_t c = t.values_[w.idx].cols();
      for (std::size_t j = 0; j < c; ++j) gw[i * c + j] += g[j];
    });
  }

  Var matvec(Var w, Var x) {
    const Tensor &wv = values_[w.idx];
    const Tensor &xv = values_[x.idx];
    Tensor out({wv.rows()});
    kern::matvec(wv, xv.data(), out.data());
    return push(std::move(out), rg_[w.idx] || rg_[x.idx],
                [w, x](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  const Tensor &wv = t.values_[w.idx];
                  const Tensor &xv = t.values_[x.idx];
                  const std::size_t m = wv.rows(), n = wv.cols();
                  if (t.rg_[w.idx]) {
                    auto gw = t.ensure_grad(w.idx);
                    for (std::size_t i = 0; i < m; ++i) {
                      const double gi = g[i];
                      for (std::size_t j = 0; j < n; ++j)
                        gw[i * n + j] += gi * xv[j];
                    }
                  }
                  if (t.rg_[x.idx]) {
                    auto gx = t.ensure_grad(x.idx);
                    for (std::size_t i = 0; i < m; ++i) {
                      const double gi = g[i];
                      auto wr = wv.row(i);
                      for (std::size_t j = 0; j < n; ++j) gx[j] += wr[j] * gi;
                    }
                  }
                });
  }

  /// y = M^T x  (M: r x c, x: r) -> y: c.
  Var matvec_t(Var m, Var x) {
    const Tensor &mv = values_[m.idx];
    const Tensor &xv = values_[x.idx];
    Tensor out({mv.cols()});
    kern::matvec_t(mv, xv.data(), out.data());
    return push(std::move(out), rg_[m.idx] || rg_[x.idx],
                [m, x](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  const Tensor &mv = t.values_[m.idx];
                  const Tensor &xv = t.values_[x.idx];
                  const std::size_t r = mv.rows(), c = mv.cols();
                  if (t.rg_[m.idx]) {
                    auto gm = t.ensure_grad(m.idx);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        gm[i * c + j] += xv[i] * g[j];
                  }
                  if (t.rg_[x.idx]) {
                    auto gx = t.ensure_grad(x.idx);
                    for (std::size_t i = 0; i < r; ++i) {
                      auto mr = mv.row(i);
                      double acc = 0.0;
                      for (std::size_t j = 0; j < c; ++j) acc += mr[j] * g[j];
                      gx[i] += acc;
                    }
                  }
                });
  }

  Var add(Var a, Var b) {
    const Tensor &av = values_[a.idx];
    const Tensor &bv = values_[b.idx];
    if (!av.same_shape(bv)) throw std::invalid_argument("Tape::add: shape mismatch");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    return push(std::move(out), rg_[a.idx] || rg_[b.idx],
                [a, b](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
  }

  Var sub(Var a, Var b) {
    const Tensor &av = values_[a.idx];
    const Tensor &bv = values_[b.idx];
    if (!av.same_shape(bv)) throw std::invalid_argument("Tape::sub: shape mismatch");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
    return push(std::move(out), rg_[a.idx] || rg_[b.idx],
                [a, b](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  t.accumulate(a, g);
                  if (t.rg_[b.idx]) {
                    auto gb = t.ensure_grad(b.idx);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                  }
                });
  }

  Var mul(Var a, Var b) {
    const Tensor &av = values_[a.idx];
    const Tensor &bv = values_[b.idx];
    if (!av.same_shape(bv)) throw std::invalid_argument("Tape::mul: shape mismatch");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return push(std::move(out), rg_[a.idx] || rg_[b.idx],
                [a, b](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  const Tensor &av = t.values_[a.idx];
                  const Tensor &bv = t.values_[b.idx];
                  if (t.rg_[a.idx]) {
                    auto ga = t.ensure_grad(a.idx);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                  }
                  if (t.rg_[b.idx]) {
                    auto gb = t.ensure_grad(b.idx);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  }
                });
  }

  /// Each row of M plus v.
  Var add_broadcast_row(Var m, Var v) {
    const Tensor &mv = values_[m.idx];
    const Tensor &vv = values_[v.idx];
    if (mv.cols() != vv.numel())
      throw std::invalid_argument("Tape::add_broadcast_row: shape mismatch");
    Tensor out(mv.shape());
    for (std::size_t i = 0; i < mv.rows(); ++i)
      for (std::size_t j = 0; j < mv.cols(); ++j)
        out.at(i, j) = mv.at(i, j) + vv[j];
    return push(std::move(out), rg_[m.idx] || rg_[v.idx],
                [m, v](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  const std::size_t r = t.values_[m.idx].rows();
                  const std::size_t c = t.values_[m.idx].cols();
                  t.accumulate(m, g);
                  if (t.rg_[v.idx]) {
                    auto gv = t.ensure_grad(v.idx);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
                  }
                });
  }

  Var sigmoid(Var a) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    kern::sigmoid(av.data(), out.data());
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      const Tensor &y = t.values_[self];
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }

  Var tanh(Var a) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    kern::tanh(av.data(), out.data());
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      const Tensor &y = t.values_[self];
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }

  Var layer_norm(Var a, double eps = 1e-12) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    kern::layer_norm(av.data(), out.data(), eps);
    // recover the scale factor for backward
    double mean = 0.0, var = 0.0;
    for (double x : av.data()) mean += x;
    mean /= static_cast<double>(av.numel());
    for (double x : av.data()) var += (x - mean) * (x - mean);
    var /= static_cast<double>(av.numel());
    const double inv = 1.0 / std::sqrt(var + eps);
    return push(std::move(out), rg_[a.idx],
                [a, inv](Tape &t, std::uint32_t self) {
                  if (!t.rg_[a.idx]) return;
                  auto g = t.grad_ref(self);
                  const Tensor &y = t.values_[self];
                  const std::size_t n = g.size();
                  double gmean = 0.0, gymean = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    gmean += g[i];
                    gymean += g[i] * y[i];
                  }
                  gmean /= static_cast<double>(n);
                  gymean /= static_cast<double>(n);
                  auto ga = t.ensure_grad(a.idx);
                  for (std::size_t i = 0; i < n; ++i)
                    ga[i] += inv * (g[i] - gmean - y[i] * gymean);
                });
  }

  Var softmax(Var a) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    kern::softmax(av.data(), out.data());
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      const Tensor &y = t.values_[self];
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += y[i] * (g[i] - dot);
    });
  }

  Var log_softmax(Var a) {
    const Tensor &av = values_[a.idx];
    if (av.numel() == 0)
      throw std::invalid_argument("Tape::log_softmax: empty vector");
    Tensor out(av.shape());
    kern::log_softmax(av.data(), out.data());
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      const Tensor &y = t.values_[self];
      double gsum = 0.0;
      for (double v : g) gsum += v;
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] - std::exp(y[i]) * gsum;
    });
  }

  Var logsumexp(Var a) {
    const Tensor &av = values_[a.idx];
    double lse = kern::logsumexp(av.data());
    return push(Tensor::Scalar(lse), rg_[a.idx],
                [a, lse](Tape &t, std::uint32_t self) {
                  if (!t.rg_[a.idx]) return;
                  auto g = t.grad_ref(self);
                  const Tensor &av = t.values_[a.idx];
                  auto ga = t.ensure_grad(a.idx);
                  for (std::size_t i = 0; i < av.numel(); ++i)
                    ga[i] += g[0] * std::exp(av[i] - lse);
                });
  }

  Var pick(Var a, std::size_t i) {
    const Tensor &av = values_[a.idx];
    if (i >= av.numel()) throw std::invalid_argument("Tape::pick: bad index");
    return push(Tensor::Scalar(av[i]), rg_[a.idx],
                [a, i](Tape &t, std::uint32_t self) {
                  if (!t.rg_[a.idx]) return;
                  auto g = t.grad_ref(self);
                  t.ensure_grad(a.idx)[i] += g[0];
                });
  }

  /// -sum_k q_k * log_softmax(logits)_k with q a constant target.
  /// The fused form keeps one tape node per sequence position.
  Var ce_const_target(Var logits, std::vector<double> q) {
    const Tensor &lv = values_[logits.idx];
    if (lv.numel() != q.size())
      throw std::invalid_argument("Tape::ce_const_target: length mismatch");
    const double lse = kern::logsumexp(lv.data());
    double loss = 0.0, qsum = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      loss -= q[k] * (lv[k] - lse);
      qsum += q[k];
    }
    return push(Tensor::Scalar(loss), rg_[logits.idx],
                [logits, q = std::move(q), lse, qsum](Tape &t,
                                                      std::uint32_t self) {
                  if (!t.rg_[logits.idx]) return;
                  auto g = t.grad_ref(self);
                  const Tensor &lv = t.values_[logits.idx];
                  auto gl = t.ensure_grad(logits.idx);
                  for (std::size_t k = 0; k < q.size(); ++k)
                    gl[k] += g[0] * (qsum * std::exp(lv[k] - lse) - q[k]);
                });
  }

  Var scale(Var a, double c) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
    return push(std::move(out), rg_[a.idx], [a, c](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }

  Var add_const(Var a, double c) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      t.accumulate(a, t.grad_ref(self));
    });
  }

  Var square(Var a) {
    const Tensor &av = values_[a.idx];
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * av[i];
    return push(std::move(out), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      const Tensor &av = t.values_[a.idx];
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * av[i] * g[i];
    });
  }

  Var sum_all(Var a) {
    const Tensor &av = values_[a.idx];
    double s = 0.0;
    for (double v : av.data()) s += v;
    return push(Tensor::Scalar(s), rg_[a.idx], [a](Tape &t, std::uint32_t self) {
      if (!t.rg_[a.idx]) return;
      auto g = t.grad_ref(self);
      auto ga = t.ensure_grad(a.idx);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
  }

  Var concat(Var a, Var b) {
    const Tensor &av = values_[a.idx];
    const Tensor &bv = values_[b.idx];
    Tensor out({av.numel() + bv.numel()});
    std::copy(av.data().begin(), av.data().end(), out.data().begin());
    std::copy(bv.data().begin(), bv.data().end(),
              out.data().begin() + av.numel());
    return push(std::move(out), rg_[a.idx] || rg_[b.idx],
                [a, b](Tape &t, std::uint32_t self) {
                  auto g = t.grad_ref(self);
                  const std::size_t na = t.values_[a.idx].numel();
                  if (t.rg_[a.idx]) {
                    auto ga = t.ensure_grad(a.idx);
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                  }
                  if (t.rg_[b.idx]) {
                    auto gb = t.ensure_grad(b.idx);
                    for (std::size_t i = 0; i < gb.size(); ++i)
                      gb[i] += g[na + i];
                  }
                });
  }

  /// Stack equal-length vectors into a (rows x cols) matrix node.
  Var stack_rows(const std::vector<Var> &rows) {
    if (rows.empty()) throw std::invalid_argument("Tape::stack_rows: empty");
    const std::size_t c = values_[rows[0].idx].numel();
    Tensor out({rows.size(), c});
    bool rg = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Tensor &rv = values_[rows[i].idx];
      if (rv.numel() != c)
        throw std::invalid_argument("Tape::stack_rows: ragged rows");
      std::copy(rv.data().begin(), rv.data().end(), out.row(i).begin());
      rg = rg || rg_[rows[i].idx];
    }
    return push(std::move(out), rg, [rows](Tape &t, std::uint32_t self) {
      auto g = t.grad_ref(self);
      const std::size_t c = t.values_[self].cols();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!t.rg_[rows[i].idx]) continue;
        auto gr = t.ensure_grad(rows[i].idx);
        for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
      }
    });
  }

  // -- reverse pass ---------------------------------------------------------

  void backward(Var loss) {
    const Tensor &lv = values_[loss.idx];
    if (!lv.is_scalar())
      throw std::invalid_argument("Tape::backward: loss must be scalar");
    grads_.assign(values_.size(), {});
    ensure_grad(loss.idx)[0] = 1.0;
    for (std::uint32_t i = loss.idx + 1; i-- > 0;) {
      if (grads_[i].empty() || !back_[i]) continue;
      back_[i](*this, i);
    }
  }

 private:
  using BackFn = std::function<void(Tape &, std::uint32_t)>;

  Var push(Tensor t, bool rg, BackFn fn) {
    values_.push_back(std::move(t));
    rg_.push_back(rg);
    back_.push_back(rg ? std::move(fn) : nullptr);
    return Var{static_cast<std::uint32_t>(values_.size() - 1)};
  }

  std::span<double> ensure_grad(std::uint32_t i) {
    if (grads_.size() < values_.size()) grads_.resize(values_.size());
    if (grads_[i].empty()) grads_[i].assign(values_[i].numel(), 0.0);
    return grads_[i];
  }

  std::span<const double> grad_ref(std::uint32_t i) { return grads_[i]; }

  void accumulate(Var v, std::span<const double> g) {
    if (!rg_[v.idx]) return;
    auto gv = ensure_grad(v.idx);
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
  }

  std::vector<Tensor> values_;
  std::vector<bool> rg_;
  std::vector<BackFn> back_;
  std::vector<std::vector<double>> grads_;
};

/// Central-difference gradient of a scalar function, the independent oracle
/// every analytic gradient in this library is checked against.
inline Tensor finite_difference_gradient(
    const std::function<double(const Tensor &)> &f, const Tensor &x,
    double h = 1e-5) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.numel(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = f(probe);
    probe[k] = orig - h;
    const double fm = f(probe);
    probe[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace nn
}  // namespace rlm
