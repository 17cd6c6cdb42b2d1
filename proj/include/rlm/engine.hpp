// rlm/engine.hpp

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

#include "rlm/tape.hpp"

namespace rlm {
namespace nn {

// The model math is written once, templated over an engine. TapeEngine
// records onto a Tape for training; EvalEngine runs the same kernels on
// plain tensors for decoding, so both paths produce bit-identical forward
// values.

struct TapeEngine {
  using V = Var;
  using P = Var;
  Tape *tape;

  explicit TapeEngine(Tape &t) : tape(&t) {}

  V zeros(std::size_t n) { return tape->constant(Tensor({n})); }
  V row(V w, std::size_t i) { return tape->row(w, i); }
  V matvec(V w, V x) { return tape->matvec(w, x); }
  V matvec_t(V m, V x) { return tape->matvec_t(m, x); }
  V add(V a, V b) { return tape->add(a, b); }
  V sub(V a, V b) { return tape->sub(a, b); }
  V mul(V a, V b) { return tape->mul(a, b); }
  V add_broadcast_row(V m, V v) { return tape->add_broadcast_row(m, v); }
  V sigmoid(V a) { return tape->sigmoid(a); }
  V tanh(V a) { return tape->tanh(a); }
  V layer_norm(V a) { return tape->layer_norm(a); }
  V softmax(V a) { return tape->softmax(a); }
  V log_softmax(V a) { return tape->log_softmax(a); }
  V logsumexp(V a) { return tape->logsumexp(a); }
  V pick(V a, std::size_t i) { return tape->pick(a, i); }
  V scale(V a, double c) { return tape->scale(a, c); }
  V add_const(V a, double c) { return tape->add_const(a, c); }
  V square(V a) { return tape->square(a); }
  V concat(V a, V b) { return tape->concat(a, b); }
  V stack_rows(const std::vector<V> &rows) { return tape->stack_rows(rows); }
};

struct EvalEngine {
  using V = Tensor;
  using P = const Tensor *;

  V zeros(std::size_t n) { return Tensor({n}); }
  V row(P w, std::size_t i) {
    V out({w->cols()});
    auto src = w->row(i);
    std::copy(src.begin(), src.end(), out.data().begin());
    return out;
  }
  V row(const V &w, std::size_t i) {
    V out({w.cols()});
    auto src = w.row(i);
    std::copy(src.begin(), src.end(), out.data().begin());
    return out;
  }
  V matvec(P w, const V &x) {
    V y({w->rows()});
    kern::matvec(*w, x.data(), y.data());
    return y;
  }
  V matvec(const V &w, P x) {
    V y({w.rows()});
    kern::matvec(w, x->data(), y.data());
    return y;
  }
  V matvec(const V &w, const V &x) {
    V y({w.rows()});
    kern::matvec(w, x.data(), y.data());
    return y;
  }
  V matvec_t(const V &m, const V &x) {
    V y({m.cols()});
    kern::matvec_t(m, x.data(), y.data());
    return y;
  }
  V add(const V &a, const V &b) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    return out;
  }
  V add(const V &a, P b) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + (*b)[i];
    return out;
  }
  V sub(const V &a, const V &b) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
    return out;
  }
  V mul(const V &a, const V &b) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  V add_broadcast_row(const V &m, const V &v) {
    V out(m.shape());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        out.at(i, j) = m.at(i, j) + v[j];
    return out;
  }
  V sigmoid(const V &a) {
    V out(a.shape());
    kern::sigmoid(a.data(), out.data());
    return out;
  }
  V tanh(const V &a) {
    V out(a.shape());
    kern::tanh(a.data(), out.data());
    return out;
  }
  V layer_norm(const V &a) {
    V out(a.shape());
    kern::layer_norm(a.data(), out.data());
    return out;
  }
  V softmax(const V &a) {
    V out(a.shape());
    kern::softmax(a.data(), out.data());
    return out;
  }
  V log_softmax(const V &a) {
    V out(a.shape());
    kern::log_softmax(a.data(), out.data());
    return out;
  }
  V logsumexp(const V &a) { return Tensor::Scalar(kern::logsumexp(a.data())); }
  V pick(const V &a, std::size_t i) { return Tensor::Scalar(a[i]); }
  V scale(const V &a, double c) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * c;
    return out;
  }
  V add_const(const V &a, double c) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + c;
    return out;
  }
  V square(const V &a) {
    V out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * a[i];
    return out;
  }
  V concat(const V &a, const V &b) {
    V out({a.numel() + b.numel()});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(),
              out.data().begin() + a.numel());
    return out;
  }
  V stack_rows(const std::vector<V> &rows) {
    V out({rows.size(), rows[0].numel()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].data().begin(), rows[i].data().end(),
                out.row(i).begin());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Gated recurrent cell, shared by the encoder, the ASR decoder and the LM /
// residual backbones.
// ---------------------------------------------------------------------------

struct GruWeights {
  Tensor wr, ur, br, wz, uz, bz, wn, un, bn;

  void init(Rng &rng, std::size_t in, std::size_t hidden) {
    auto mat = [&](std::size_t r, std::size_t c) {
      Tensor t({r, c});
      const double s = 1.0 / std::sqrt(static_cast<double>(c));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
      return t;
    };
    wr = mat(hidden, in);
    wz = mat(hidden, in);
    wn = mat(hidden, in);
    ur = mat(hidden, hidden);
    uz = mat(hidden, hidden);
    un = mat(hidden, hidden);
    br = Tensor({hidden});
    bz = Tensor({hidden});
    bn = Tensor({hidden});
  }

  template <class Fn>
  void visit(const std::string &prefix, Fn &&fn) {
    fn(prefix + ".wr", &wr);
    fn(prefix + ".ur", &ur);
    fn(prefix + ".br", &br);
    fn(prefix + ".wz", &wz);
    fn(prefix + ".uz", &uz);
    fn(prefix + ".bz", &bz);
    fn(prefix + ".wn", &wn);
    fn(prefix + ".un", &un);
    fn(prefix + ".bn", &bn);
  }
};

template <class E>
struct BoundGru {
  typename E::P wr, ur, br, wz, uz, bz, wn, un, bn;
};

/// h' = z*h + (1-z)*tanh(Wn x + Un (r*h) + bn)
template <class E>
typename E::V gru_step(E &e, const BoundGru<E> &p, const typename E::V &x,
                       const typename E::V &h) {
  auto r = e.sigmoid(e.add(e.add(e.matvec(p.wr, x), e.matvec(p.ur, h)), p.br));
  auto z = e.sigmoid(e.add(e.add(e.matvec(p.wz, x), e.matvec(p.uz, h)), p.bz));
  auto rh = e.mul(r, h);
  auto n = e.tanh(e.add(e.add(e.matvec(p.wn, x), e.matvec(p.un, rh)), p.bn));
  auto keep = e.mul(z, h);
  auto take = e.mul(e.add_const(e.scale(z, -1.0), 1.0), n);
  return e.add(keep, take);
}

}  // namespace nn
}  // namespace rlm
