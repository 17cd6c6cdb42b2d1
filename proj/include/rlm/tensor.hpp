// rlm/tensor.hpp

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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlm {
namespace nn {

/// Dense row-major multi-dimensional array of 64-bit floats. Rank 0..2 is
/// all the models here need; rank 0 is represented as shape {} with one
/// element and doubles as a scalar.
class Tensor {
 public:
  Tensor() : shape_(), data_(1, 0.0) {}

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(CheckedNumel(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != CheckedNumel(shape_))
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static Tensor Scalar(double v) {
    Tensor t;
    t.data_[0] = v;
    return t;
  }
  static Tensor Zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }
  static Tensor FromVec(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  const std::vector<std::size_t> &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.size() <= 1; }

  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : numel(); }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double &at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }

  double scalar() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor: not a scalar");
    return data_[0];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor &o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool requires_grad = false;

 private:
  static std::size_t CheckedNumel(const std::vector<std::size_t> &shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 output is pinned by the standard but the
// <random> distributions are not, so the distributions are implemented here.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combine a base seed with a stream tag so that sub-streams (corpus draw,
/// feature noise, parameter init, shuffles) never collide.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ h);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
    std::size_t i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i >= n ? n - 1 : i;
  }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang, boosted for alpha < 1.
  double gamma(double alpha) {
    if (alpha <= 0.0)
      throw std::invalid_argument("Rng::gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Raw kernels shared by the tape forward pass and the no-grad eval path, so
// both produce bit-identical values. Normalization kernels bump a softmax
// counter used by the decode cost instrumentation.
// ---------------------------------------------------------------------------

struct EvalCounters {
  long long softmax_evals = 0;
  long long asr_decoder_steps = 0;
  void reset() { *this = EvalCounters{}; }
};

inline EvalCounters &eval_counters() {
  thread_local EvalCounters c;
  return c;
}

namespace kern {

inline void matvec(const Tensor &w, std::span<const double> x,
                   std::span<double> y) {
  const std::size_t m = w.rows(), n = w.cols();
  if (x.size() != n || y.size() != m)
    throw std::invalid_argument("matvec: shape mismatch");
  for (std::size_t i = 0; i < m; ++i) {
    std::span<const double> wr = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

// y = M^T x, M is (r x c), x has r entries, y has c entries.
inline void matvec_t(const Tensor &m, std::span<const double> x,
                     std::span<double> y) {
  const std::size_t r = m.rows(), c = m.cols();
  if (x.size() != r || y.size() != c)
    throw std::invalid_argument("matvec_t: shape mismatch");
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    std::span<const double> mr = m.row(i);
    const double xi = x[i];
    for (std::size_t j = 0; j < c; ++j) y[j] += mr[j] * xi;
  }
}

inline void sigmoid(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

inline void tanh(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

inline double max_of(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  return m;
}

/// Max-shifted logsumexp; the one place log-domain accumulation happens.
inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty vector");
  eval_counters().softmax_evals++;
  double m = max_of(v);
  if (!std::isfinite(m)) return m;  // all -inf or a nan/inf input
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline void softmax(std::span<const double> v, std::span<double> y) {
  if (v.empty()) throw std::invalid_argument("softmax: empty vector");
  eval_counters().softmax_evals++;
  double m = max_of(v);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = std::exp(v[i] - m);
    s += y[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) y[i] /= s;
}

inline void log_softmax(std::span<const double> v, std::span<double> y) {
  if (v.empty()) throw std::invalid_argument("log_softmax: empty vector");
  eval_counters().softmax_evals++;
  double m = max_of(v);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  double lse = m + std::log(s);
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] - lse;
}

/// LayerNorm without learned affine: zero mean, unit variance per vector.
inline void layer_norm(std::span<const double> x, std::span<double> y,
                       double eps = 1e-12) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv;
}

}  // namespace kern

// Convenience vector forms used by scoring code and tests.

inline std::vector<double> log_softmax(std::span<const double> v) {
  std::vector<double> y(v.size());
  kern::log_softmax(v, y);
  return y;
}

inline std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> y(v.size());
  kern::softmax(v, y);
  return y;
}

inline double logsumexp(std::span<const double> v) { return kern::logsumexp(v); }

}  // namespace nn
}  // namespace rlm
