// rlm/optim.hpp

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

#include "rlm/tensor.hpp"

namespace rlm {
namespace nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moment accumulators plus the shared step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;

  void init(const std::vector<Tensor *> &params) {
    m.clear();
    v.clear();
    for (const Tensor *p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
    step = 0;
  }
};

/// Standard bias-corrected Adam update, fixed learning rate.
inline void adam_step(const std::vector<Tensor *> &params,
                      const std::vector<const Tensor *> &grads,
                      AdamState &state, const AdamConfig &cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor &w = *params[p];
    const Tensor &g = *grads[p];
    if (!w.same_shape(g) || !w.same_shape(state.m[p]))
      throw std::invalid_argument("adam_step: shape mismatch");
    Tensor &m = state.m[p];
    Tensor &v = state.v[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Scale gradients in place so their global L2 norm is at most max_norm.
inline void clip_global_norm(std::vector<Tensor> &grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor &g : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Tensor &g : grads)
    for (double &x : g.data()) x *= s;
}

}  // namespace nn
}  // namespace rlm
