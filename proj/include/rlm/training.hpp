// rlm/training.hpp

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

#include "rlm/corpus.hpp"
#include "rlm/models.hpp"
#include "rlm/optim.hpp"

namespace rlm {

struct TrainSettings {
  int epochs = 10;
  int batch_size = 16;
  double lr = 1e-3;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
};

/// Called once per epoch with a preformatted loss line (the same line the
/// CLI appends to the training log).
using EpochHook = std::function<void(int epoch, const std::string &line)>;

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, nn::Rng &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

/// Read gradients off the tape, clip, and apply one Adam update.
inline void apply_gradients(std::vector<nn::Tensor *> &params,
                            const std::vector<nn::Var> &leaves, nn::Tape &tape,
                            nn::AdamState &adam, const nn::AdamConfig &cfg,
                            double clip) {
  std::vector<nn::Tensor> grads;
  grads.reserve(leaves.size());
  for (nn::Var v : leaves) grads.push_back(tape.grad(v));
  if (clip > 0.0) nn::clip_global_norm(grads, clip);
  std::vector<const nn::Tensor *> gptrs;
  gptrs.reserve(grads.size());
  for (const nn::Tensor &g : grads) gptrs.push_back(&g);
  nn::adam_step(params, gptrs, adam, cfg);
}

inline std::vector<double> one_hot(std::size_t n, std::size_t i) {
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  return v;
}

}  // namespace detail

/// Teacher-forced per-token cross entropy of one utterance on the tape.
/// Returns the summed loss node and the number of positions.
inline std::pair<nn::Var, std::size_t> asr_utterance_loss(
    nn::TapeEngine &e, const nn::BoundAsr<nn::TapeEngine> &bound,
    const ModelDims &dims, const nn::Tensor &frames,
    const std::vector<int> &tokens) {
  nn::Tape &tape = *e.tape;
  auto frames_node = tape.constant(frames);
  auto enc = nn::encode_frames(e, bound, frames_node, frames.rows(),
                               static_cast<std::size_t>(dims.h));
  auto proj = nn::attention_proj(e, bound, enc, frames.rows());
  std::vector<int> targets = tokens;
  targets.push_back(dims.k);  // eos
  auto h = e.zeros(static_cast<std::size_t>(dims.h));
  int prev = dims.k + 1;  // sos
  nn::Var loss = tape.constant(nn::Tensor::Scalar(0.0));
  for (int target : targets) {
    auto [logits, h2] = nn::asr_step(e, bound, enc, proj, h, prev);
    loss = tape.add(loss,
                    tape.ce_const_target(
                        logits, detail::one_hot(
                                    static_cast<std::size_t>(dims.score_dim()),
                                    static_cast<std::size_t>(target))));
    h = h2;
    prev = target;
  }
  return {loss, targets.size()};
}

/// Train the recognizer with plain teacher-forced cross entropy over
/// (frames, tokens) pairs. Features are materialized by the caller so the
/// same array feeds every epoch.
inline AsrModel train_asr(const std::vector<nn::Tensor> &frames,
                          const std::vector<std::vector<int>> &token_seqs,
                          const ModelDims &dims, const TrainSettings &ts,
                          const EpochHook &hook = {}) {
  if (frames.empty() || frames.size() != token_seqs.size())
    throw std::invalid_argument("train_asr: empty or mismatched dataset");
  AsrModel model(dims, ts.seed);
  auto params = model.params();
  nn::AdamState adam;
  adam.init(params);
  nn::AdamConfig acfg;
  acfg.lr = ts.lr;
  nn::Rng shuffle_rng(nn::mix_seed(ts.seed, "shuffle.asr"));
  const std::size_t n = frames.size();
  for (int epoch = 1; epoch <= ts.epochs; ++epoch) {
    auto order = detail::shuffled_indices(n, shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(ts.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(ts.batch_size));
      nn::Tape tape;
      nn::TapeEngine e(tape);
      nn::TapeBinder binder{&tape, {}};
      auto bound = nn::bind_tape(binder, model);
      nn::Var total = tape.constant(nn::Tensor::Scalar(0.0));
      std::size_t total_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        auto [loss, ntok] = asr_utterance_loss(e, bound, dims,
                                               frames[order[i]],
                                               token_seqs[order[i]]);
        total = tape.add(total, loss);
        total_tokens += ntok;
      }
      nn::Var mean = tape.scale(total, 1.0 / static_cast<double>(total_tokens));
      tape.backward(mean);
      epoch_loss += tape.value(mean).scalar() *
                    static_cast<double>(total_tokens);
      epoch_tokens += total_tokens;
      detail::apply_gradients(params, binder.leaves, tape, adam, acfg,
                              ts.grad_clip);
    }
    if (hook) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %d loss %.6f", epoch,
                    epoch_loss / static_cast<double>(epoch_tokens));
      hook(epoch, buf);
    }
  }
  return model;
}

/// Next-token cross entropy of one sentence on the tape (targets include
/// eos, input starts at sos).
inline std::pair<nn::Var, std::size_t> lm_sentence_loss(
    nn::TapeEngine &e, const nn::BoundLm<nn::TapeEngine> &bound,
    const ModelDims &dims, const std::vector<int> &tokens) {
  nn::Tape &tape = *e.tape;
  std::vector<int> targets = tokens;
  targets.push_back(dims.k);  // eos
  auto h = e.zeros(static_cast<std::size_t>(dims.h));
  int prev = dims.k + 1;  // sos
  nn::Var loss = tape.constant(nn::Tensor::Scalar(0.0));
  for (int target : targets) {
    auto [scores, h2] = nn::backbone_step(e, bound, h, prev);
    loss = tape.add(loss,
                    tape.ce_const_target(
                        scores, detail::one_hot(
                                    static_cast<std::size_t>(dims.score_dim()),
                                    static_cast<std::size_t>(target))));
    h = h2;
    prev = target;
  }
  return {loss, targets.size()};
}

/// Train an external LM on text-only sequences.
inline NeuralLm train_lm(const std::vector<std::vector<int>> &sentences,
                         const ModelDims &dims, const TrainSettings &ts,
                         const EpochHook &hook = {}) {
  if (sentences.empty())
    throw std::invalid_argument("train_lm: empty dataset");
  NeuralLm model(dims, ts.seed);
  auto params = model.net.params();
  nn::AdamState adam;
  adam.init(params);
  nn::AdamConfig acfg;
  acfg.lr = ts.lr;
  nn::Rng shuffle_rng(nn::mix_seed(ts.seed, "shuffle.lm"));
  const std::size_t n = sentences.size();
  for (int epoch = 1; epoch <= ts.epochs; ++epoch) {
    auto order = detail::shuffled_indices(n, shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(ts.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(ts.batch_size));
      nn::Tape tape;
      nn::TapeEngine e(tape);
      nn::TapeBinder binder{&tape, {}};
      auto bound = nn::bind_tape(binder, model.net);
      nn::Var total = tape.constant(nn::Tensor::Scalar(0.0));
      std::size_t total_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        auto [loss, ntok] = lm_sentence_loss(e, bound, dims,
                                             sentences[order[i]]);
        total = tape.add(total, loss);
        total_tokens += ntok;
      }
      nn::Var mean = tape.scale(total, 1.0 / static_cast<double>(total_tokens));
      tape.backward(mean);
      epoch_loss += tape.value(mean).scalar() *
                    static_cast<double>(total_tokens);
      epoch_tokens += total_tokens;
      detail::apply_gradients(params, binder.leaves, tape, adam, acfg,
                              ts.grad_clip);
    }
    if (hook) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %d loss %.6f", epoch,
                    epoch_loss / static_cast<double>(epoch_tokens));
      hook(epoch, buf);
    }
  }
  return model;
}

/// Perplexity over a corpus: exp of mean negative log prob per token,
/// eos included.
inline double perplexity(const NeuralLm &lm,
                         const std::vector<std::vector<int>> &sentences) {
  if (sentences.empty())
    throw std::invalid_argument("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto &s : sentences) {
    std::vector<int> y = s;
    y.push_back(lm.net.dims.k);
    nll -= lm_log_prob(lm, y);
    tokens += y.size();
  }
  return std::exp(nll / static_cast<double>(tokens));
}

/// Materialize feature frames for a dataset once, so training epochs and
/// decode passes see identical arrays.
inline std::vector<nn::Tensor> materialize_features(const Dataset &ds,
                                                    const nn::Tensor &codebook,
                                                    double noise_std,
                                                    std::uint64_t feature_seed) {
  std::vector<nn::Tensor> frames;
  frames.reserve(ds.size());
  for (const Utterance &u : ds.utterances)
    frames.push_back(
        synthesize_features(u.tokens, codebook, noise_std, feature_seed, u.id));
  return frames;
}

inline std::vector<std::vector<int>> token_seqs(const Dataset &ds) {
  std::vector<std::vector<int>> out;
  out.reserve(ds.size());
  for (const Utterance &u : ds.utterances) out.push_back(u.tokens);
  return out;
}

}  // namespace rlm
