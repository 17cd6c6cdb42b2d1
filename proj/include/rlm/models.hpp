// rlm/models.hpp

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

#include "rlm/checkpoint.hpp"
#include "rlm/engine.hpp"

namespace rlm {

struct ModelDims {
  int k = 30;   // emission vocabulary
  int f = 16;   // feature dim
  int h = 64;   // recurrent hidden size
  int e = 32;   // token embedding dim
  int a = 64;   // additive attention dim

  int score_dim() const { return k + 1; }   // symbols + eos
  int embed_rows() const { return k + 2; }  // + sos
};

namespace nn {

template <class E>
struct BoundAsr {
  BoundGru<E> enc, dec;
  typename E::P wa, ua, ba, va;
  typename E::P dec_emb, wo, bo;
};

template <class E>
struct BoundLm {
  typename E::P emb;
  BoundGru<E> gru;
  typename E::P wo, bo;
};

// NOTE: bind_* field order must match the corresponding visit() order; the
// training loop pairs tape leaves with model parameters positionally.

template <class E, class B>
BoundGru<E> bind_gru(B &b, const GruWeights &g) {
  BoundGru<E> r;
  r.wr = b(g.wr);
  r.ur = b(g.ur);
  r.br = b(g.br);
  r.wz = b(g.wz);
  r.uz = b(g.uz);
  r.bz = b(g.bz);
  r.wn = b(g.wn);
  r.un = b(g.un);
  r.bn = b(g.bn);
  return r;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Toy attention encoder-decoder recognizer.
// ---------------------------------------------------------------------------

class AsrModel {
 public:
  ModelDims dims;
  nn::GruWeights enc;                  // frames -> hidden
  nn::Tensor wa, ua, ba, va;           // additive attention
  nn::Tensor dec_emb;                  // (k+2) x e
  nn::GruWeights dec;                  // [emb; ctx] -> hidden
  nn::Tensor wo, bo;                   // output projection, zero-initialized

  AsrModel() = default;

  AsrModel(const ModelDims &d, std::uint64_t seed) : dims(d) {
    nn::Rng rng(nn::mix_seed(seed, "init.asr"));
    const auto h = static_cast<std::size_t>(d.h);
    const auto a = static_cast<std::size_t>(d.a);
    enc.init(rng, static_cast<std::size_t>(d.f), h);
    auto mat = [&](std::size_t r, std::size_t c) {
      nn::Tensor t({r, c});
      const double s = 1.0 / std::sqrt(static_cast<double>(c));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
      return t;
    };
    wa = mat(a, h);
    ua = mat(a, h);
    ba = nn::Tensor({a});
    va = nn::Tensor({a});
    for (std::size_t i = 0; i < va.numel(); ++i) va[i] = rng.uniform(-1.0, 1.0);
    dec_emb = mat(static_cast<std::size_t>(d.embed_rows()),
                  static_cast<std::size_t>(d.e));
    dec.init(rng, static_cast<std::size_t>(d.e) + h, h);
    // zero output projection: untrained next-token distribution is uniform
    wo = nn::Tensor({static_cast<std::size_t>(d.score_dim()), h});
    bo = nn::Tensor({static_cast<std::size_t>(d.score_dim())});
  }

  template <class Fn>
  void visit(Fn &&fn) {
    enc.visit("enc", fn);
    fn("attn.wa", &wa);
    fn("attn.ua", &ua);
    fn("attn.ba", &ba);
    fn("attn.va", &va);
    fn("dec.emb", &dec_emb);
    dec.visit("dec", fn);
    fn("out.w", &wo);
    fn("out.b", &bo);
  }

  std::vector<nn::Tensor *> params() {
    std::vector<nn::Tensor *> out;
    visit([&](const std::string &, nn::Tensor *t) { out.push_back(t); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Recurrent LM backbone. NeuralLm normalizes per step; ResidualNet emits the
// raw head scores with no normalization anywhere in its inference path.
// ---------------------------------------------------------------------------

class LmBackbone {
 public:
  ModelDims dims;
  nn::Tensor emb;
  nn::GruWeights gru;
  nn::Tensor wo, bo;  // zero-initialized

  LmBackbone() = default;

  LmBackbone(const ModelDims &d, std::uint64_t seed,
             const char *stream = "init.lm")
      : dims(d) {
    nn::Rng rng(nn::mix_seed(seed, stream));
    const auto h = static_cast<std::size_t>(d.h);
    nn::Tensor t({static_cast<std::size_t>(d.embed_rows()),
                  static_cast<std::size_t>(d.e)});
    const double s = 1.0 / std::sqrt(static_cast<double>(d.e));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
    emb = std::move(t);
    gru.init(rng, static_cast<std::size_t>(d.e), h);
    wo = nn::Tensor({static_cast<std::size_t>(d.score_dim()), h});
    bo = nn::Tensor({static_cast<std::size_t>(d.score_dim())});
  }

  template <class Fn>
  void visit(Fn &&fn) {
    fn("emb", &emb);
    gru.visit("gru", fn);
    fn("out.w", &wo);
    fn("out.b", &bo);
  }

  std::vector<nn::Tensor *> params() {
    std::vector<nn::Tensor *> out;
    visit([&](const std::string &, nn::Tensor *t) { out.push_back(t); });
    return out;
  }
};

struct NeuralLm {
  LmBackbone net;
  NeuralLm() = default;
  NeuralLm(const ModelDims &d, std::uint64_t seed) : net(d, seed, "init.lm") {}
};

struct ResidualNet {
  LmBackbone net;
  ResidualNet() = default;
  ResidualNet(const ModelDims &d, std::uint64_t seed)
      : net(d, seed, "init.reslm") {}
};

// ---------------------------------------------------------------------------
// Binding to engines
// ---------------------------------------------------------------------------

namespace nn {

inline BoundAsr<EvalEngine> bind_eval(const AsrModel &m) {
  auto b = [](const Tensor &t) { return &t; };
  BoundAsr<EvalEngine> r;
  r.enc = bind_gru<EvalEngine>(b, m.enc);
  r.wa = &m.wa;
  r.ua = &m.ua;
  r.ba = &m.ba;
  r.va = &m.va;
  r.dec_emb = &m.dec_emb;
  r.dec = bind_gru<EvalEngine>(b, m.dec);
  r.wo = &m.wo;
  r.bo = &m.bo;
  return r;
}

inline BoundLm<EvalEngine> bind_eval(const LmBackbone &m) {
  auto b = [](const Tensor &t) { return &t; };
  BoundLm<EvalEngine> r;
  r.emb = &m.emb;
  r.gru = bind_gru<EvalEngine>(b, m.gru);
  r.wo = &m.wo;
  r.bo = &m.bo;
  return r;
}

/// Copies every parameter onto the tape as a requires_grad leaf. `leaves`
/// aligns with the model's visit()/params() order.
struct TapeBinder {
  Tape *tape;
  std::vector<Var> leaves;

  Var operator()(const Tensor &t) {
    Tensor c = t;
    c.requires_grad = true;
    Var v = tape->leaf(std::move(c));
    leaves.push_back(v);
    return v;
  }
};

inline BoundAsr<TapeEngine> bind_tape(TapeBinder &b, const AsrModel &m) {
  BoundAsr<TapeEngine> r;
  r.enc = bind_gru<TapeEngine>(b, m.enc);
  r.wa = b(m.wa);
  r.ua = b(m.ua);
  r.ba = b(m.ba);
  r.va = b(m.va);
  r.dec_emb = b(m.dec_emb);
  r.dec = bind_gru<TapeEngine>(b, m.dec);
  r.wo = b(m.wo);
  r.bo = b(m.bo);
  return r;
}

inline BoundLm<TapeEngine> bind_tape(TapeBinder &b, const LmBackbone &m) {
  BoundLm<TapeEngine> r;
  r.emb = b(m.emb);
  r.gru = bind_gru<TapeEngine>(b, m.gru);
  r.wo = b(m.wo);
  r.bo = b(m.bo);
  return r;
}

// ---------------------------------------------------------------------------
// Engine-generic forward passes (single source of truth for the math)
// ---------------------------------------------------------------------------

/// Encoder: recurrent pass over frames, layer norm per frame. Returns a
/// (frames x h) matrix of normalized states.
template <class E>
typename E::V encode_frames(E &e, const BoundAsr<E> &m,
                            const typename E::V &frames, std::size_t n_frames,
                            std::size_t hidden) {
  if (n_frames == 0)
    throw std::invalid_argument("encode: at least one frame required");
  std::vector<typename E::V> outs;
  outs.reserve(n_frames);
  auto h = e.zeros(hidden);
  for (std::size_t t = 0; t < n_frames; ++t) {
    auto x = e.row(frames, t);
    h = gru_step(e, m.enc, x, h);
    outs.push_back(e.layer_norm(h));
  }
  return e.stack_rows(outs);
}

template <class E>
typename E::V attention_proj(E &e, const BoundAsr<E> &m,
                             const typename E::V &enc_mat,
                             std::size_t n_states) {
  std::vector<typename E::V> rows;
  rows.reserve(n_states);
  for (std::size_t t = 0; t < n_states; ++t)
    rows.push_back(e.matvec(m.wa, e.row(enc_mat, t)));
  return e.stack_rows(rows);
}

template <class E>
typename E::V attention_context(E &e, const BoundAsr<E> &m,
                                const typename E::V &enc_mat,
                                const typename E::V &proj_mat,
                                const typename E::V &s_prev) {
  auto qs = e.add(e.matvec(m.ua, s_prev), m.ba);
  auto scores = e.matvec(e.tanh(e.add_broadcast_row(proj_mat, qs)), m.va);
  auto alpha = e.softmax(scores);
  return e.matvec_t(enc_mat, alpha);
}

/// One teacher-forced / decode step. Returns (logits over k+1, new state).
template <class E>
std::pair<typename E::V, typename E::V> asr_step(E &e, const BoundAsr<E> &m,
                                                 const typename E::V &enc_mat,
                                                 const typename E::V &proj_mat,
                                                 const typename E::V &h_prev,
                                                 int token) {
  auto embv = e.row(m.dec_emb, static_cast<std::size_t>(token));
  auto ctx = attention_context(e, m, enc_mat, proj_mat, h_prev);
  auto x = e.concat(embv, ctx);
  auto h = gru_step(e, m.dec, x, h_prev);
  auto logits = e.add(e.matvec(m.wo, h), m.bo);
  return {logits, h};
}

/// One LM-backbone step. Raw head scores; callers normalize if they are a
/// probability model.
template <class E>
std::pair<typename E::V, typename E::V> backbone_step(E &e,
                                                      const BoundLm<E> &m,
                                                      const typename E::V &h_prev,
                                                      int token) {
  auto x = e.row(m.emb, static_cast<std::size_t>(token));
  auto h = gru_step(e, m.gru, x, h_prev);
  auto scores = e.add(e.matvec(m.wo, h), m.bo);
  return {scores, h};
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Plain (no-grad) model API used by decoding, scoring and tests
// ---------------------------------------------------------------------------

inline void check_token(const ModelDims &d, int token) {
  if (token < 0 || token >= d.embed_rows())
    throw std::invalid_argument("invalid token id " + std::to_string(token));
}

/// Encoder states for one utterance, one normalized h-dim state per frame.
inline nn::Tensor encode(const AsrModel &m, const nn::Tensor &frames) {
  if (frames.numel() == 0 || frames.rows() == 0)
    throw std::invalid_argument("encode: empty input");
  nn::EvalEngine e;
  auto bound = nn::bind_eval(m);
  return nn::encode_frames(e, bound, frames, frames.rows(),
                           static_cast<std::size_t>(m.dims.h));
}

/// Encoder states plus precomputed attention keys, shared by every
/// hypothesis over one utterance.
struct EncCtx {
  nn::Tensor states;  // T x h
  nn::Tensor proj;    // T x a
};

inline EncCtx make_enc_ctx(const AsrModel &m, nn::Tensor states) {
  nn::EvalEngine e;
  auto bound = nn::bind_eval(m);
  EncCtx ctx;
  ctx.proj = nn::attention_proj(e, bound, states, states.rows());
  ctx.states = std::move(states);
  return ctx;
}

/// The zero-filled encoder block used for internal-LM estimation: a single
/// all-zero state, so the attention context is exactly zero.
inline EncCtx make_zero_enc_ctx(const AsrModel &m) {
  EncCtx ctx;
  ctx.states = nn::Tensor({1, static_cast<std::size_t>(m.dims.h)});
  ctx.proj = nn::Tensor({1, static_cast<std::size_t>(m.dims.a)});
  return ctx;
}

inline nn::Tensor initial_decoder_state(const AsrModel &m) {
  return nn::Tensor({static_cast<std::size_t>(m.dims.h)});
}

/// One decoder step: logits over k+1 classes (incl. eos) and the new state.
inline std::pair<nn::Tensor, nn::Tensor> decoder_step(const AsrModel &m,
                                                      const EncCtx &enc,
                                                      const nn::Tensor &h_prev,
                                                      int token) {
  check_token(m.dims, token);
  nn::eval_counters().asr_decoder_steps++;
  nn::EvalEngine e;
  auto bound = nn::bind_eval(m);
  return nn::asr_step(e, bound, enc.states, enc.proj, h_prev, token);
}

/// Teacher-forced sum of per-step log probabilities of y (y ends with eos).
inline double asr_log_prob(const AsrModel &m, const nn::Tensor &frames,
                           const std::vector<int> &y) {
  EncCtx enc = make_enc_ctx(m, encode(m, frames));
  nn::Tensor h = initial_decoder_state(m);
  int prev = m.dims.k + 1;  // sos
  double total = 0.0;
  for (int target : y) {
    auto [logits, h2] = decoder_step(m, enc, h, prev);
    total += nn::log_softmax(logits.data())[static_cast<std::size_t>(target)];
    h = std::move(h2);
    prev = target;
  }
  return total;
}

inline nn::Tensor initial_lm_state(const LmBackbone &m) {
  return nn::Tensor({static_cast<std::size_t>(m.dims.h)});
}

/// Next-token log probabilities (normalized) and new state.
inline std::pair<nn::Tensor, nn::Tensor> lm_step(const NeuralLm &lm,
                                                 const nn::Tensor &h_prev,
                                                 int token) {
  check_token(lm.net.dims, token);
  nn::EvalEngine e;
  auto bound = nn::bind_eval(lm.net);
  auto [scores, h] = nn::backbone_step(e, bound, h_prev, token);
  return {e.log_softmax(scores), std::move(h)};
}

/// Raw residual scores; no softmax or logsumexp on this path.
inline std::pair<nn::Tensor, nn::Tensor> residual_step(const ResidualNet &rn,
                                                       const nn::Tensor &h_prev,
                                                       int token) {
  check_token(rn.net.dims, token);
  nn::EvalEngine e;
  auto bound = nn::bind_eval(rn.net);
  return nn::backbone_step(e, bound, h_prev, token);
}

/// Teacher-forced LM log probability of y (y ends with eos).
inline double lm_log_prob(const NeuralLm &lm, const std::vector<int> &y) {
  nn::Tensor h = initial_lm_state(lm.net);
  int prev = lm.net.dims.k + 1;  // sos
  double total = 0.0;
  for (int target : y) {
    auto [logp, h2] = lm_step(lm, h, prev);
    total += logp[static_cast<std::size_t>(target)];
    h = std::move(h2);
    prev = target;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoint glue
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<std::string, std::string>> dims_meta(
    const ModelDims &d) {
  return {{"k", std::to_string(d.k)},
          {"f", std::to_string(d.f)},
          {"h", std::to_string(d.h)},
          {"e", std::to_string(d.e)},
          {"a", std::to_string(d.a)}};
}

inline ModelDims dims_from_meta(const Checkpoint &ck) {
  ModelDims d;
  d.k = std::stoi(ck.meta_at("k"));
  d.f = std::stoi(ck.meta_at("f"));
  d.h = std::stoi(ck.meta_at("h"));
  d.e = std::stoi(ck.meta_at("e"));
  d.a = std::stoi(ck.meta_at("a"));
  return d;
}

template <class Model>
Checkpoint to_checkpoint(Model &m, const std::string &kind,
                         const std::vector<std::pair<std::string, std::string>>
                             &extra_meta = {}) {
  Checkpoint ck;
  ck.kind = kind;
  ck.meta = dims_meta(m.dims);
  for (const auto &kv : extra_meta) ck.meta.push_back(kv);
  m.visit([&](const std::string &name, nn::Tensor *t) {
    ck.tensors.emplace_back(name, *t);
  });
  return ck;
}

template <class Model>
void from_checkpoint(Model &m, const Checkpoint &ck, const std::string &kind) {
  if (ck.kind != kind)
    throw CheckpointError("checkpoint: expected kind '" + kind + "', got '" +
                          ck.kind + "'");
  m.dims = dims_from_meta(ck);
  // rebuild shapes, then overwrite with stored values
  Model fresh(m.dims, 0);
  m = fresh;
  m.visit([&](const std::string &name, nn::Tensor *t) {
    const nn::Tensor &src = ck.tensor_at(name);
    if (!t->same_shape(src))
      throw CheckpointError("checkpoint: shape mismatch for tensor " + name);
    *t = src;
  });
}

}  // namespace detail

inline void save_model(AsrModel &m, const std::string &path,
                       const std::vector<std::pair<std::string, std::string>>
                           &extra_meta = {}) {
  write_checkpoint(detail::to_checkpoint(m, "asr", extra_meta), path);
}

inline AsrModel load_asr(const std::string &path) {
  Checkpoint ck = read_checkpoint(path);
  AsrModel m;
  detail::from_checkpoint(m, ck, "asr");
  return m;
}

inline void save_model(NeuralLm &m, const std::string &path,
                       const std::vector<std::pair<std::string, std::string>>
                           &extra_meta = {}) {
  write_checkpoint(detail::to_checkpoint(m.net, "lm", extra_meta), path);
}

inline NeuralLm load_lm(const std::string &path) {
  Checkpoint ck = read_checkpoint(path);
  NeuralLm m;
  detail::from_checkpoint(m.net, ck, "lm");
  return m;
}

inline void save_model(ResidualNet &m, const std::string &path,
                       const std::vector<std::pair<std::string, std::string>>
                           &extra_meta = {}) {
  write_checkpoint(detail::to_checkpoint(m.net, "reslm", extra_meta), path);
}

inline ResidualNet load_reslm(const std::string &path) {
  Checkpoint ck = read_checkpoint(path);
  ResidualNet m;
  detail::from_checkpoint(m.net, ck, "reslm");
  return m;
}

}  // namespace rlm
