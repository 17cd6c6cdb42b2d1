// rlm/corpus.hpp

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

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rlm/tensor.hpp"

namespace rlm {

/// Character-class vocabulary: K emission symbols plus reserved sos/eos ids.
/// Token ids 0..K-1 are grammar symbols, id K is eos, id K+1 is sos. sos is
/// decoder-input-only; eos takes part in every score.
class Vocab {
 public:
  explicit Vocab(int k) : k_(k) {
    if (k < 2 || k > 36)
      throw std::invalid_argument("Vocab: K must be in [2, 36]");
  }

  int size() const { return k_; }        // emission symbols
  int eos() const { return k_; }
  int sos() const { return k_ + 1; }
  int score_dim() const { return k_ + 1; }  // symbols + eos
  int embed_rows() const { return k_ + 2; }

  std::string symbol(int id) const {
    if (id == eos()) return "</s>";
    if (id == sos()) return "<s>";
    if (id < 0 || id >= k_) throw std::invalid_argument("Vocab: bad id");
    return std::string(1, id < 26 ? static_cast<char>('a' + id)
                                  : static_cast<char>('0' + id - 26));
  }

  /// -1 when the symbol is unknown.
  int id(std::string_view sym) const {
    if (sym == "</s>") return eos();
    if (sym == "<s>") return sos();
    if (sym.size() != 1) return -1;
    char c = sym[0];
    int v = -1;
    if (c >= 'a' && c <= 'z') v = c - 'a';
    else if (c >= '0' && c <= '9') v = 26 + (c - '0');
    return (v >= 0 && v < k_) ? v : -1;
  }

 private:
  int k_;
};

/// Row-stochastic bigram grammar. Matrix is (K+1) x (K+1): rows 0..K-1
/// condition on the previous token, row K is the start-of-sentence row;
/// columns 0..K-1 are next-token probabilities, column K is eos.
struct Grammar {
  int k = 0;
  std::uint64_t seed = 0;
  nn::Tensor transitions;  // (k+1) x (k+1)

  int start_row() const { return k; }
  int eos_col() const { return k; }
};

/// One synthetic utterance. Feature frames are never stored; they are
/// regenerated from (id, feature seed) on demand.
struct Utterance {
  std::uint64_t id = 0;
  char domain = 'S';
  std::vector<int> tokens;  // grammar symbols only, no sos/eos
};

struct Dataset {
  std::vector<Utterance> utterances;
  bool empty() const { return utterances.empty(); }
  std::size_t size() const { return utterances.size(); }
};

// ---------------------------------------------------------------------------
// Grammar construction and sampling
// ---------------------------------------------------------------------------

/// Dirichlet-like random bigram grammar. Each row puts a fixed 0.1 mass on
/// eos (start row: none) and spreads the rest over tokens with a Dirichlet
/// draw of the given concentration. one_hot_cycle handles the concentration
/// -> 0 limit with a deterministic cycle: i -> (i+1) mod K, start -> 0,
/// never eos.
inline Grammar build_grammar(std::uint64_t seed, int k, double concentration,
                             bool one_hot_cycle = false) {
  if (k < 2) throw std::invalid_argument("build_grammar: K must be >= 2");
  if (!one_hot_cycle && concentration <= 0.0)
    throw std::invalid_argument("build_grammar: concentration must be > 0");
  Grammar g;
  g.k = k;
  g.seed = seed;
  g.transitions = nn::Tensor({static_cast<std::size_t>(k + 1),
                              static_cast<std::size_t>(k + 1)});
  if (one_hot_cycle) {
    for (int r = 0; r < k; ++r) g.transitions.at(r, (r + 1) % k) = 1.0;
    g.transitions.at(g.start_row(), 0) = 1.0;
    return g;
  }
  nn::Rng rng(nn::mix_seed(seed, "grammar"));
  constexpr double kEosMass = 0.1;
  for (int r = 0; r <= k; ++r) {
    const double token_mass = (r == g.start_row()) ? 1.0 : 1.0 - kEosMass;
    std::vector<double> w(k);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      w[c] = rng.gamma(concentration);
      sum += w[c];
    }
    for (int c = 0; c < k; ++c) g.transitions.at(r, c) = token_mass * w[c] / sum;
    g.transitions.at(r, g.eos_col()) = (r == g.start_row()) ? 0.0 : kEosMass;
  }
  return g;
}

/// Sample n token sequences. eos is masked until len_min tokens are emitted;
/// a sequence reaching len_max is cut there.
inline std::vector<std::vector<int>> sample_corpus(const Grammar &g, int n,
                                                   int len_min, int len_max,
                                                   std::uint64_t seed) {
  if (len_min < 1) throw std::invalid_argument("sample_corpus: len_min >= 1");
  if (len_max < len_min)
    throw std::invalid_argument("sample_corpus: len_max >= len_min");
  nn::Rng rng(nn::mix_seed(seed, "corpus"));
  std::vector<std::vector<int>> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    std::vector<int> seq;
    int row = g.start_row();
    while (static_cast<int>(seq.size()) < len_max) {
      const bool allow_eos = static_cast<int>(seq.size()) >= len_min;
      double mass = 0.0;
      const int lim = allow_eos ? g.k + 1 : g.k;
      for (int c = 0; c < lim; ++c) mass += g.transitions.at(row, c);
      double u = rng.uniform() * mass;
      int next = lim - 1;
      double acc = 0.0;
      for (int c = 0; c < lim; ++c) {
        acc += g.transitions.at(row, c);
        if (u < acc) {
          next = c;
          break;
        }
      }
      if (next == g.eos_col()) break;
      seq.push_back(next);
      row = next;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-acoustics
// ---------------------------------------------------------------------------

/// Per-token code vectors standing in for acoustic realizations; one F-dim
/// unit-scale gaussian code per grammar symbol.
inline nn::Tensor build_codebook(std::uint64_t seed, int k, int feat_dim) {
  nn::Rng rng(nn::mix_seed(seed, "codebook"));
  nn::Tensor cb({static_cast<std::size_t>(k), static_cast<std::size_t>(feat_dim)});
  for (std::size_t i = 0; i < cb.numel(); ++i) cb[i] = rng.normal();
  return cb;
}

/// Noisy variable-rate frames: 2-4 frames per token, each the token's code
/// vector plus gaussian noise. Deterministic in (utt_id, seed).
inline nn::Tensor synthesize_features(const std::vector<int> &tokens,
                                      const nn::Tensor &codebook,
                                      double noise_std, std::uint64_t seed,
                                      std::uint64_t utt_id = 0) {
  const int k = static_cast<int>(codebook.rows());
  const std::size_t f = codebook.cols();
  for (int t : tokens)
    if (t < 0 || t >= k)
      throw std::invalid_argument("synthesize_features: token id outside codebook");
  nn::Rng rng(nn::mix_seed(nn::mix_seed(seed, "features"), utt_id));
  std::vector<int> frames_per_token(tokens.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    frames_per_token[i] = 2 + static_cast<int>(rng.index(3));  // 2..4
    total += frames_per_token[i];
  }
  nn::Tensor frames({total, f});
  std::size_t r = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto code = codebook.row(static_cast<std::size_t>(tokens[i]));
    for (int rep = 0; rep < frames_per_token[i]; ++rep, ++r) {
      auto dst = frames.row(r);
      for (std::size_t d = 0; d < f; ++d)
        dst[d] = code[d] + noise_std * rng.normal();
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string &m) : std::runtime_error(m) {}
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Corpus file: one utterance per line, `<id>\t<domain>\t<symbols...>`.
inline void write_corpus(const Dataset &ds, const Vocab &vocab,
                         std::ostream &os) {
  for (const Utterance &u : ds.utterances) {
    os << u.id << '\t' << u.domain << '\t';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      if (i) os << ' ';
      os << vocab.symbol(u.tokens[i]);
    }
    os << '\n';
  }
}

inline void write_corpus(const Dataset &ds, const Vocab &vocab,
                         const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_corpus: cannot open " + path);
  write_corpus(ds, vocab, os);
}

inline Dataset read_corpus(std::istream &is, const Vocab &vocab) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ParseError("corpus line " + std::to_string(lineno) +
                       ": expected <id>\\t<domain>\\t<symbols>");
    Utterance u;
    {
      const char *b = line.data();
      auto [p, ec] = std::from_chars(b, b + t1, u.id);
      if (ec != std::errc() || p != b + t1)
        throw ParseError("corpus line " + std::to_string(lineno) + ": bad id");
    }
    if (t2 != t1 + 2 || (line[t1 + 1] != 'S' && line[t1 + 1] != 'T'))
      throw ParseError("corpus line " + std::to_string(lineno) +
                       ": domain must be S or T");
    u.domain = line[t1 + 1];
    std::istringstream toks(line.substr(t2 + 1));
    std::string sym;
    while (toks >> sym) {
      int id = vocab.id(sym);
      if (id < 0 || id >= vocab.size())
        throw ParseError("corpus line " + std::to_string(lineno) +
                         ": unknown symbol '" + sym + "'");
      u.tokens.push_back(id);
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

inline Dataset read_corpus(const std::string &path, const Vocab &vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_corpus: cannot open " + path);
  return read_corpus(is, vocab);
}

/// Grammar / codebook container: `RLMCORPUS 1` header, then key lines and
/// matrix rows as decimal floats.
inline void write_matrix_file(const nn::Tensor &m, const std::string &kind,
                              std::uint64_t seed, std::ostream &os) {
  os << "RLMCORPUS 1\n";
  os << "kind " << kind << '\n';
  os << "seed " << seed << '\n';
  os << "rows " << m.rows() << '\n';
  os << "cols " << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << ' ';
      os << format_double(row[c]);
    }
    os << '\n';
  }
}

inline nn::Tensor read_matrix_file(std::istream &is, const std::string &kind,
                                   std::uint64_t *seed_out = nullptr) {
  std::string line;
  if (!std::getline(is, line) || line != "RLMCORPUS 1")
    throw ParseError("matrix file: bad or missing RLMCORPUS 1 header");
  std::string k;
  std::uint64_t seed = 0;
  std::size_t rows = 0, cols = 0;
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(is, line)) throw ParseError("matrix file: truncated header");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") ls >> k;
    else if (key == "seed") ls >> seed;
    else if (key == "rows") ls >> rows;
    else if (key == "cols") ls >> cols;
    else throw ParseError("matrix file: unexpected header line '" + line + "'");
  }
  if (k != kind)
    throw ParseError("matrix file: expected kind '" + kind + "', got '" + k + "'");
  nn::Tensor m({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(is, line))
      throw ParseError("matrix file: truncated at row " + std::to_string(r));
    std::istringstream ls(line);
    for (std::size_t c = 0; c < cols; ++c)
      if (!(ls >> m.at(r, c)))
        throw ParseError("matrix file: bad float at row " + std::to_string(r));
  }
  if (seed_out) *seed_out = seed;
  return m;
}

inline void write_grammar(const Grammar &g, const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_grammar: cannot open " + path);
  write_matrix_file(g.transitions, "grammar", g.seed, os);
}

inline Grammar read_grammar(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_grammar: cannot open " + path);
  Grammar g;
  g.transitions = read_matrix_file(is, "grammar", &g.seed);
  g.k = static_cast<int>(g.transitions.rows()) - 1;
  return g;
}

inline void write_codebook(const nn::Tensor &cb, std::uint64_t seed,
                           const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_codebook: cannot open " + path);
  write_matrix_file(cb, "codebook", seed, os);
}

inline nn::Tensor read_codebook(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_codebook: cannot open " + path);
  return read_matrix_file(is, "codebook");
}

/// Assemble a Dataset from raw sampled sequences.
inline Dataset make_dataset(const std::vector<std::vector<int>> &seqs,
                            char domain, std::uint64_t first_id = 0) {
  Dataset ds;
  ds.utterances.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    Utterance u;
    u.id = first_id + i;
    u.domain = domain;
    u.tokens = seqs[i];
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

}  // namespace rlm
