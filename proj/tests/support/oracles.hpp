// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracles, implemented independently of the library: brute-force
// clustering via the full similarity matrix and BFS over the three-clause
// link rule, flat top-K by exhaustive sort, and a from-scratch rendering of
// the trigram hashing rule. They intentionally share only the library's
// documented arithmetic contract (double accumulation, ascending index,
// scalar loops) so exact comparisons are meaningful.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<float>>;  // row-major vectors

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

inline double norm(const std::vector<float>& a) {
  double s = 0.0;
  for (float x : a) s += double(x) * double(x);
  return std::sqrt(s);
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// argmax_j cosine(v_i, v_j), j != i, smallest j on ties, from the full matrix.
inline std::vector<uint32_t> first_neighbors(const Matrix& v) {
  const size_t n = v.size();
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i != j) sim[i][j] = cosine(v[i], v[j]);
    }
  }
  std::vector<uint32_t> kappa(n);
  for (size_t i = 0; i < n; ++i) {
    size_t best = i == 0 ? 1 : 0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sim[i][j] > sim[i][best]) best = j;
    }
    kappa[i] = uint32_t(best);
  }
  return kappa;
}

// Connected components of the link graph with an edge (i,j) iff j = kappa[i],
// kappa[j] = i, or kappa[i] = kappa[j]; BFS, ids relabeled by smallest member.
inline std::vector<uint32_t> components(const std::vector<uint32_t>& kappa) {
  const size_t n = kappa.size();
  std::vector<std::vector<uint32_t>> adj(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const bool linked = kappa[i] == j || kappa[j] == i || kappa[i] == kappa[j];
      if (linked) {
        adj[i].push_back(uint32_t(j));
        adj[j].push_back(uint32_t(i));
      }
    }
  }
  std::vector<uint32_t> label(n, UINT32_MAX);
  uint32_t next = 0;
  for (size_t s = 0; s < n; ++s) {
    if (label[s] != UINT32_MAX) continue;
    std::deque<uint32_t> queue{uint32_t(s)};
    label[s] = next;
    while (!queue.empty()) {
      const uint32_t u = queue.front();
      queue.pop_front();
      for (uint32_t w : adj[u]) {
        if (label[w] == UINT32_MAX) {
          label[w] = next;
          queue.push_back(w);
        }
      }
    }
    ++next;
  }
  return label;  // smallest member order falls out of the ascending scan
}

// Unweighted member mean per cluster, renormalized when requested.
inline Matrix centroids(const Matrix& v, const std::vector<uint32_t>& label,
                        uint32_t num_clusters, bool renormalize) {
  const size_t dim = v.empty() ? 0 : v[0].size();
  std::vector<std::vector<double>> acc(num_clusters,
                                       std::vector<double>(dim, 0.0));
  std::vector<size_t> count(num_clusters, 0);
  for (size_t i = 0; i < v.size(); ++i) {
    for (size_t d = 0; d < dim; ++d) acc[label[i]][d] += double(v[i][d]);
    ++count[label[i]];
  }
  Matrix out(num_clusters, std::vector<float>(dim));
  for (uint32_t c = 0; c < num_clusters; ++c) {
    for (size_t d = 0; d < dim; ++d) {
      out[c][d] = float(acc[c][d] / double(count[c]));
    }
    if (renormalize) {
      const double nn = norm(out[c]);
      if (nn >= 1e-12) {
        for (auto& x : out[c]) x = float(double(x) / nn);
      }
    }
  }
  return out;
}

struct OracleLevel {
  std::vector<uint32_t> assignment;  // per leaf
  uint32_t num_clusters = 0;
};

// Full brute-force hierarchy: cluster, recompute centroids, repeat until one
// cluster remains or the count stops shrinking.
inline std::vector<OracleLevel> hierarchy(const Matrix& leaves,
                                          bool renormalize) {
  std::vector<OracleLevel> levels;
  Matrix current = leaves;
  std::vector<uint32_t> to_leaf(leaves.size());
  std::iota(to_leaf.begin(), to_leaf.end(), 0u);

  while (current.size() >= 2) {
    const auto kappa = first_neighbors(current);
    const auto label = components(kappa);
    const uint32_t c = *std::max_element(label.begin(), label.end()) + 1;
    if (c >= current.size()) break;  // no further merge possible

    OracleLevel level;
    level.num_clusters = c;
    level.assignment.resize(leaves.size());
    for (size_t leaf = 0; leaf < leaves.size(); ++leaf) {
      level.assignment[leaf] = label[to_leaf[leaf]];
    }
    levels.push_back(level);

    current = centroids(current, label, c, renormalize);
    for (auto& t : to_leaf) t = label[t];
    if (c == 1) break;
  }
  return levels;
}

// Exhaustive top-K: highest cosine first, ties by smaller row id.
inline std::vector<uint32_t> flat_top_k(const std::vector<float>& query,
                                        const Matrix& rows, size_t k) {
  std::vector<uint32_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> sims(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) sims[i] = cosine(query, rows[i]);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  order.resize(std::min(k, order.size()));
  return order;
}

// Character-trigram feature hashing, re-derived from the documented rule:
// bytewise ASCII lowercase, every consecutive 3-byte window (the whole text
// as one gram when shorter), FNV-1a 64 modulo dim picks the bucket, weight
// +1, then L2 normalization.
inline std::vector<float> stub_embed(std::string_view text, uint32_t dim) {
  std::string lower(text);
  for (char& ch : lower) {
    if (ch >= 'A' && ch <= 'Z') ch = char(ch - 'A' + 'a');
  }
  auto fnv = [](std::string_view s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    return h;
  };
  std::vector<float> v(dim, 0.0f);
  if (lower.size() < 3) {
    v[fnv(lower) % dim] += 1.0f;
  } else {
    for (size_t i = 0; i + 3 <= lower.size(); ++i) {
      v[fnv(std::string_view(lower).substr(i, 3)) % dim] += 1.0f;
    }
  }
  const double nn = norm(v);
  for (auto& x : v) x = float(double(x) / nn);
  return v;
}

// Deterministic test RNG; mt19937_64's sequence is standard-specified.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double gaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::vector<float> unit_vector(uint32_t dim) {
    std::vector<float> v(dim);
    double s = 0.0;
    do {
      for (auto& x : v) x = float(gaussian());
      s = norm(v);
    } while (s < 1e-6);
    for (auto& x : v) x = float(double(x) / s);
    return v;
  }

  uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oracle
