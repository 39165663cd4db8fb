// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiermem/error.hpp"

namespace hiermem {

using Vec = std::vector<float>;

// Flat row-major f32 storage. Rows are the unit of identity everywhere:
// corpus embeddings, cluster centroids, anchors.
struct VectorStore {
  uint32_t dim = 0;
  std::vector<float> data;

  VectorStore() = default;
  explicit VectorStore(uint32_t d) : dim(d) {}

  size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  bool empty() const { return data.empty(); }

  std::span<const float> row(size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> row(size_t i) { return {data.data() + i * dim, dim}; }

  void push_row(std::span<const float> v) {
    if (v.size() != dim) {
      throw InternalError("push_row: dimension mismatch (" +
                          std::to_string(v.size()) + " vs " +
                          std::to_string(dim) + ")");
    }
    data.insert(data.end(), v.begin(), v.end());
  }

  void reserve_rows(size_t n) { data.reserve(size_t(dim) * n); }

  bool operator==(const VectorStore&) const = default;
};

// Arithmetic contract, relied on for reproducible clustering: accumulate in
// double, ascending index, plain loops. Keep these scalar; with strict FP
// semantics the results are then identical across call sites.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

inline double l2_norm(std::span<const float> a) {
  double s = 0.0;
  for (float x : a) s += double(x) * double(x);
  return std::sqrt(s);
}

// Cosine similarity; a zero-norm operand compares as 0 to everything.
inline double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

inline double cosine_prenorm(std::span<const float> a, std::span<const float> b,
                             double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return dot(a, b) / (norm_a * norm_b);
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Scales to unit norm in place. Throws on (near-)zero vectors.
inline void normalize(std::span<float> v, const std::string& what = "vector") {
  const double n = l2_norm(v);
  if (n < 1e-12) throw InputError(what + " has zero norm, cannot normalize");
  for (float& x : v) x = float(double(x) / n);
}

// Renormalizes unless the norm is degenerate, in which case the input is kept
// as computed. Centroids of antipodal points land here.
inline void renormalize_if_possible(std::span<float> v) {
  const double n = l2_norm(v);
  if (n < 1e-12) return;
  for (float& x : v) x = float(double(x) / n);
}

// Mean of rows[indices], double accumulation, f32 result.
inline Vec mean_of_rows(const VectorStore& store,
                        std::span<const uint32_t> indices) {
  if (indices.empty()) throw InternalError("mean_of_rows: no rows");
  std::vector<double> acc(store.dim, 0.0);
  for (uint32_t idx : indices) {
    auto r = store.row(idx);
    for (size_t d = 0; d < acc.size(); ++d) acc[d] += double(r[d]);
  }
  Vec out(store.dim);
  for (size_t d = 0; d < acc.size(); ++d) {
    out[d] = float(acc[d] / double(indices.size()));
  }
  return out;
}

// Weighted mean of rows[indices] with weights w, double accumulation.
inline Vec weighted_mean_of_rows(const VectorStore& store,
                                 std::span<const uint32_t> indices,
                                 std::span<const double> w) {
  if (indices.empty()) throw InternalError("weighted_mean_of_rows: no rows");
  std::vector<double> acc(store.dim, 0.0);
  double total = 0.0;
  for (size_t k = 0; k < indices.size(); ++k) {
    auto r = store.row(indices[k]);
    for (size_t d = 0; d < acc.size(); ++d) acc[d] += w[k] * double(r[d]);
    total += w[k];
  }
  if (total <= 0.0) throw InternalError("weighted_mean_of_rows: zero weight");
  Vec out(store.dim);
  for (size_t d = 0; d < acc.size(); ++d) out[d] = float(acc[d] / total);
  return out;
}

// Mean of loose vectors, ascending index.
inline Vec mean_of(std::span<const Vec> rows) {
  if (rows.empty()) throw InternalError("mean_of: no rows");
  std::vector<double> acc(rows.front().size(), 0.0);
  for (const Vec& r : rows) {
    for (size_t d = 0; d < acc.size(); ++d) acc[d] += double(r[d]);
  }
  Vec out(acc.size());
  for (size_t d = 0; d < acc.size(); ++d) {
    out[d] = float(acc[d] / double(rows.size()));
  }
  return out;
}

}  // namespace hiermem
