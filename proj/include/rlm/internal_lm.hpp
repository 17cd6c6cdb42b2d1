// rlm/internal_lm.hpp

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

#include "rlm/models.hpp"

namespace rlm {

/// The recognizer's implicit linguistic prior, estimated by replacing the
/// encoder output with a zero-filled block (length 1) and running only the
/// decoder under teacher forcing. Never looks at audio. Returns one logits
/// vector (k+1) per position of y, where y ends with eos.
inline std::vector<nn::Tensor> internal_lm_logits(const AsrModel &m,
                                                  const std::vector<int> &y) {
  EncCtx zero = make_zero_enc_ctx(m);
  nn::Tensor h = initial_decoder_state(m);
  int prev = m.dims.k + 1;  // sos
  std::vector<nn::Tensor> out;
  out.reserve(y.size());
  for (int target : y) {
    auto [logits, h2] = decoder_step(m, zero, h, prev);
    out.push_back(std::move(logits));
    h = std::move(h2);
    prev = target;
  }
  return out;
}

/// Teacher-forced log p(y) under the estimated internal LM.
inline double internal_lm_log_prob(const AsrModel &m,
                                   const std::vector<int> &y) {
  auto logits = internal_lm_logits(m, y);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    total += nn::log_softmax(logits[i].data())[static_cast<std::size_t>(y[i])];
  return total;
}

/// Temperature smoothing: softmax(z / T) + eps, written exactly so; the
/// entries sum to 1 + K*eps and every entry is at least eps.
inline std::vector<double> smooth(std::span<const double> z, double temperature,
                                  double eps) {
  if (temperature <= 0.0)
    throw std::invalid_argument("smooth: temperature must be positive");
  if (eps < 0.0) throw std::invalid_argument("smooth: eps must be >= 0");
  std::vector<double> scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / temperature;
  std::vector<double> p = nn::softmax(scaled);
  for (double &v : p) v += eps;
  return p;
}

}  // namespace rlm
