// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "hiermem/corpus.hpp"
#include "hiermem/error.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

// First-neighbor clustering.
//
// One round links every point i to its most similar other point k(i) under
// cosine similarity. The undirected link graph has an edge (i,j) whenever
//   j = k(i), or k(j) = i, or k(i) = k(j),
// and the clusters of the round are its connected components. Rounds repeat
// on the cluster centroids until everything has merged into one cluster, so
// the number of levels is a property of the data, not a parameter.
//
// Determinism: argmax ties break toward the smallest index, cluster ids are
// assigned by smallest member index, and all similarity/centroid arithmetic
// follows the double-accumulation contract in vec.hpp. Two runs over the same
// corpus produce identical assignments regardless of threading or tiling.

struct PartitionLevel {
  uint32_t num_clusters = 0;
  // In a hierarchy: one entry per corpus leaf. From cluster_once: one entry
  // per input vector. Ids are contiguous, ordered by smallest member index.
  std::vector<uint32_t> assignment;
  VectorStore centroids;
};

struct PartitionHierarchy {
  std::vector<PartitionLevel> levels;  // finest (level 1) to coarsest

  size_t depth() const { return levels.size(); }
  const PartitionLevel& level(size_t l) const { return levels.at(l - 1); }
};

struct FinchOptions {
  // Weight coarse-round centroids by leaf counts instead of averaging the
  // previous round's centroids uniformly.
  bool weighted_centroids = false;
  // Run the forced 2 -> 1 merge so the top level spans the whole corpus.
  bool final_merge = true;
  // Drop the top level when it is a lone all-in-one cluster (and not level 1).
  bool drop_root_if_singleton = false;
  // Inputs larger than this use the tiled neighbor scan.
  size_t block_threshold = 2048;
  size_t tile = 256;
  // Row-parallel neighbor search; 0 = one thread per hardware core.
  unsigned threads = 0;
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), uint32_t(0));
  }
  uint32_t find(uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(uint32_t a, uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<uint32_t> parent_;
};

inline void neighbor_rows_naive(const VectorStore& v,
                                std::span<const double> norms, size_t row_begin,
                                size_t row_end, std::vector<uint32_t>& out) {
  const size_t n = v.size();
  for (size_t i = row_begin; i < row_end; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    uint32_t best_j = 0;
    auto ri = v.row(i);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = cosine_prenorm(ri, v.row(j), norms[i], norms[j]);
      if (s > best) {
        best = s;
        best_j = uint32_t(j);
      }
    }
    out[i] = best_j;
  }
}

// Exact like the naive scan, just tiled over j for locality. j advances in
// ascending order across tiles, so strict > keeps the smallest-index tie rule.
inline void neighbor_rows_tiled(const VectorStore& v,
                                std::span<const double> norms, size_t row_begin,
                                size_t row_end, size_t tile,
                                std::vector<uint32_t>& out) {
  const size_t n = v.size();
  std::vector<double> best(row_end - row_begin,
                           -std::numeric_limits<double>::infinity());
  std::vector<uint32_t> best_j(row_end - row_begin, 0);
  for (size_t j0 = 0; j0 < n; j0 += tile) {
    const size_t j1 = std::min(n, j0 + tile);
    for (size_t i = row_begin; i < row_end; ++i) {
      auto ri = v.row(i);
      double b = best[i - row_begin];
      uint32_t bj = best_j[i - row_begin];
      for (size_t j = j0; j < j1; ++j) {
        if (j == i) continue;
        const double s = cosine_prenorm(ri, v.row(j), norms[i], norms[j]);
        if (s > b) {
          b = s;
          bj = uint32_t(j);
        }
      }
      best[i - row_begin] = b;
      best_j[i - row_begin] = bj;
    }
  }
  for (size_t i = row_begin; i < row_end; ++i) {
    out[i] = best_j[i - row_begin];
  }
}

}  // namespace detail

// k(i) = argmax_{j != i} cosine(v_i, v_j), ties to the smallest j.
inline std::vector<uint32_t> first_neighbors(const VectorStore& v,
                                             const FinchOptions& opts = {}) {
  const size_t n = v.size();
  if (n < 2) throw InputError("first_neighbors: need at least 2 vectors");

  std::vector<double> norms(n);
  for (size_t i = 0; i < n; ++i) norms[i] = l2_norm(v.row(i));

  std::vector<uint32_t> out(n);
  auto run_rows = [&](size_t b, size_t e) {
    if (n <= opts.block_threshold) {
      detail::neighbor_rows_naive(v, norms, b, e, out);
    } else {
      detail::neighbor_rows_tiled(v, norms, b, e, opts.tile, out);
    }
  };

  unsigned threads = opts.threads ? opts.threads
                                  : std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<size_t>(threads, n));
  if (threads <= 1 || n < 512) {
    run_rows(0, n);
  } else {
    // Rows are independent, so the split cannot change any k(i).
    std::vector<std::thread> pool;
    const size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const size_t b = t * chunk;
      const size_t e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back(run_rows, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

// One clustering round over the given vectors. Components are computed from
// the directed links i -> k(i) alone: the symmetric closure and the shared-
// neighbor clause connect exactly the same components, since k(j) = i is the
// edge (j, k(j)) and k(i) = k(j) chains i and j through their common target.
inline PartitionLevel cluster_once(const VectorStore& v,
                                   bool renormalize_centroids = false,
                                   std::span<const double> weights = {},
                                   const FinchOptions& opts = {}) {
  const size_t n = v.size();
  const auto kappa = first_neighbors(v, opts);

  detail::UnionFind uf(n);
  for (size_t i = 0; i < n; ++i) uf.unite(uint32_t(i), kappa[i]);

  PartitionLevel level;
  level.assignment.assign(n, std::numeric_limits<uint32_t>::max());
  std::vector<uint32_t> root_to_id(n, std::numeric_limits<uint32_t>::max());
  uint32_t next_id = 0;
  for (size_t i = 0; i < n; ++i) {
    const uint32_t root = uf.find(uint32_t(i));
    if (root_to_id[root] == std::numeric_limits<uint32_t>::max()) {
      root_to_id[root] = next_id++;
    }
    level.assignment[i] = root_to_id[root];
  }
  level.num_clusters = next_id;

  // Per-cluster (weighted) mean of the input vectors.
  std::vector<std::vector<uint32_t>> members(level.num_clusters);
  for (size_t i = 0; i < n; ++i) {
    members[level.assignment[i]].push_back(uint32_t(i));
  }
  level.centroids = VectorStore(v.dim);
  level.centroids.reserve_rows(level.num_clusters);
  for (uint32_t c = 0; c < level.num_clusters; ++c) {
    Vec centroid =
        weights.empty()
            ? mean_of_rows(v, members[c])
            : [&] {
                std::vector<double> w;
                w.reserve(members[c].size());
                for (uint32_t m : members[c]) w.push_back(weights[m]);
                return weighted_mean_of_rows(v, members[c], w);
              }();
    if (renormalize_centroids) renormalize_if_possible(centroid);
    level.centroids.push_row(centroid);
  }
  return level;
}

// Bottom-up hierarchy: level 1 clusters the leaves, every later level
// clusters the previous level's centroids, and assignments are composed back
// to leaves. Stops at a single cluster (or one round earlier, see
// FinchOptions::final_merge). Cluster counts strictly decrease because every
// link-graph component has at least two members.
inline PartitionHierarchy build_hierarchy(const Corpus& corpus,
                                          const FinchOptions& opts = {}) {
  if (corpus.size() < 2) {
    throw InputError("build_hierarchy: corpus must hold at least 2 records");
  }

  PartitionHierarchy hierarchy;
  PartitionLevel round =
      cluster_once(corpus.vectors, corpus.normalized, {}, opts);
  hierarchy.levels.push_back(std::move(round));

  while (true) {
    const PartitionLevel& prev = hierarchy.levels.back();
    if (prev.num_clusters <= 1) break;
    if (prev.num_clusters == 2 && !opts.final_merge) break;

    std::vector<double> weights;
    if (opts.weighted_centroids) {
      weights.assign(prev.num_clusters, 0.0);
      for (uint32_t c : prev.assignment) weights[c] += 1.0;
    }
    PartitionLevel next =
        cluster_once(prev.centroids, corpus.normalized, weights, opts);
    if (next.num_clusters >= prev.num_clusters) {
      throw InternalError("build_hierarchy: cluster count failed to decrease");
    }
    // Compose round-level assignment down to leaves.
    std::vector<uint32_t> composed(prev.assignment.size());
    for (size_t i = 0; i < prev.assignment.size(); ++i) {
      composed[i] = next.assignment[prev.assignment[i]];
    }
    next.assignment = std::move(composed);
    hierarchy.levels.push_back(std::move(next));
  }

  if (opts.drop_root_if_singleton && hierarchy.levels.size() > 1 &&
      hierarchy.levels.back().num_clusters == 1) {
    hierarchy.levels.pop_back();
  }
  return hierarchy;
}

}  // namespace hiermem
