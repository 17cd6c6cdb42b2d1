// rlm/checkpoint.hpp

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

#include <cstring>
#include <fstream>
#include <map>

#include "rlm/tensor.hpp"

namespace rlm {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string &m) : std::runtime_error(m) {}
};

/// Versioned named-tensor container. Text header and metadata, then per
/// tensor a text descriptor line followed by raw little-endian 64-bit
/// payload. Round trips are bit-exact.
struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const std::string &meta_at(const std::string &key) const {
    for (const auto &[k, v] : meta)
      if (k == key) return v;
    throw CheckpointError("checkpoint: missing metadata key '" + key + "'");
  }

  const nn::Tensor &tensor_at(const std::string &name) const {
    for (const auto &[n, t] : tensors)
      if (n == name) return t;
    throw CheckpointError("checkpoint: missing tensor '" + name + "'");
  }
};

namespace detail {

inline void put_f64_le(std::ostream &os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char buf[8];
  for (int i = 0; i < 8; ++i)
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

inline double get_f64_le(std::istream &is) {
  char buf[8];
  if (!is.read(buf, 8)) throw CheckpointError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
            << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint &ck, std::ostream &os) {
  os << "RLMCKPT 1\n";
  os << "kind " << ck.kind << '\n';
  for (const auto &[k, v] : ck.meta) os << "meta " << k << ' ' << v << '\n';
  os << "tensors " << ck.tensors.size() << '\n';
  for (const auto &[name, t] : ck.tensors) {
    os << "tensor " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    for (double v : t.data()) detail::put_f64_le(os, v);
    os << '\n';
  }
}

inline void write_checkpoint(const Checkpoint &ck, const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  write_checkpoint(ck, os);
  if (!os) throw std::runtime_error("write_checkpoint: write failed " + path);
}

inline Checkpoint read_checkpoint(std::istream &is) {
  std::string line;
  if (!std::getline(is, line) || line != "RLMCKPT 1")
    throw CheckpointError("checkpoint: unsupported version or bad header");
  Checkpoint ck;
  if (!std::getline(is, line) || line.rfind("kind ", 0) != 0)
    throw CheckpointError("checkpoint: missing kind");
  ck.kind = line.substr(5);
  std::size_t ntensors = 0;
  for (;;) {
    if (!std::getline(is, line))
      throw CheckpointError("checkpoint: truncated header");
    if (line.rfind("meta ", 0) == 0) {
      std::string rest = line.substr(5);
      std::size_t sp = rest.find(' ');
      if (sp == std::string::npos)
        throw CheckpointError("checkpoint: bad meta line");
      ck.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
    } else if (line.rfind("tensors ", 0) == 0) {
      ntensors = std::stoul(line.substr(8));
      break;
    } else {
      throw CheckpointError("checkpoint: unexpected line '" + line + "'");
    }
  }
  for (std::size_t t = 0; t < ntensors; ++t) {
    if (!std::getline(is, line) || line.rfind("tensor ", 0) != 0)
      throw CheckpointError("checkpoint: missing tensor descriptor");
    std::istringstream ls(line.substr(7));
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    std::vector<std::size_t> shape(rank);
    for (std::size_t d = 0; d < rank; ++d)
      if (!(ls >> shape[d]))
        throw CheckpointError("checkpoint: bad tensor shape for " + name);
    nn::Tensor tensor(shape);
    for (std::size_t i = 0; i < tensor.numel(); ++i)
      tensor[i] = detail::get_f64_le(is);
    int nl = is.get();
    if (nl != '\n')
      throw CheckpointError("checkpoint: bad payload terminator for " + name);
    ck.tensors.emplace_back(name, std::move(tensor));
  }
  return ck;
}

inline Checkpoint read_checkpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace rlm
