// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiermem/detail/base64.hpp"
#include "hiermem/error.hpp"
#include "hiermem/membank.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

enum class SelectionMode { kMax, kTopK, kThreshold };
enum class RetrievalMode { kHierarchical, kFlat };

inline std::string to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::kMax: return "max";
    case SelectionMode::kTopK: return "top_k";
    case SelectionMode::kThreshold: return "threshold";
  }
  return "?";
}

inline SelectionMode selection_mode_from_string(const std::string& s) {
  if (s == "max") return SelectionMode::kMax;
  if (s == "top_k") return SelectionMode::kTopK;
  if (s == "threshold") return SelectionMode::kThreshold;
  throw ConfigError("unknown selection mode \"" + s +
                    "\" (expected max, top_k, or threshold)");
}

struct RetrievalConfig {
  uint32_t top_k = 10;               // K nodes kept per level
  SelectionMode selection = SelectionMode::kTopK;
  double threshold = 0.5;            // cosine floor for kThreshold
  std::vector<uint32_t> level_mask;  // levels aggregated; empty = all levels
  bool hierarchical_aggregation = true;
  RetrievalMode mode = RetrievalMode::kHierarchical;
};

// The mask resolved against a concrete bank, sorted ascending.
inline std::vector<uint32_t> resolve_level_mask(const RetrievalConfig& config,
                                                const MemoryBank& bank) {
  std::vector<uint32_t> mask = config.level_mask;
  if (mask.empty()) {
    for (uint32_t l = 1; l <= bank.num_levels(); ++l) mask.push_back(l);
  }
  std::sort(mask.begin(), mask.end());
  mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  if (mask.front() < 1 || mask.back() > bank.num_levels()) {
    throw ConfigError("level mask entry out of range [1, " +
                      std::to_string(bank.num_levels()) + "]");
  }
  return mask;
}

inline void validate_retrieval_config(const RetrievalConfig& config) {
  if (config.top_k < 1) throw ConfigError("top_k must be at least 1");
  if (config.selection == SelectionMode::kThreshold &&
      (config.threshold <= -1.0 || config.threshold >= 1.0)) {
    throw ConfigError("threshold must lie in (-1, 1) for cosine similarity");
  }
}

// Frame features pooled into W temporal anchors.
struct AnchorSet {
  VectorStore anchors;
  uint32_t source_frame_count = 0;

  uint32_t count() const { return uint32_t(anchors.size()); }
};

// Splits F frames into W contiguous slices of near-equal size (earlier
// slices take the remainder) and averages each slice into one anchor.
inline AnchorSet make_anchors(const VectorStore& frames, uint32_t window_count,
                              bool renormalize) {
  const uint32_t frame_count = uint32_t(frames.size());
  if (window_count < 1) throw InputError("anchor count must be at least 1");
  if (window_count > frame_count) {
    throw InputError("anchor count " + std::to_string(window_count) +
                     " exceeds frame count " + std::to_string(frame_count));
  }
  AnchorSet set;
  set.source_frame_count = frame_count;
  set.anchors.dim = frames.dim;
  set.anchors.reserve_rows(window_count);

  const uint32_t base = frame_count / window_count;
  const uint32_t remainder = frame_count % window_count;
  uint32_t begin = 0;
  for (uint32_t a = 0; a < window_count; ++a) {
    const uint32_t len = base + (a < remainder ? 1 : 0);
    std::vector<uint32_t> rows(len);
    for (uint32_t i = 0; i < len; ++i) rows[i] = begin + i;
    Vec anchor = mean_of_rows(frames, rows);
    if (renormalize) renormalize_if_possible(anchor);
    set.anchors.push_row(anchor);
    begin += len;
  }
  return set;
}

struct Selection {
  std::vector<uint32_t> ids;      // descending similarity, ties by smaller id
  std::vector<double> similarities;
};

// Scores every candidate and keeps nodes per the configured rule: top_k keeps
// the K best (clamped to the candidate count), max keeps exactly one, and
// threshold keeps everything at or above τ but never returns empty (the
// single best survives when nothing passes).
inline Selection select_at_level(std::span<const float> query,
                                 const VectorStore& store,
                                 std::span<const uint32_t> candidates,
                                 const RetrievalConfig& config) {
  if (candidates.empty()) {
    throw InputError("select_at_level: empty candidate set");
  }
  std::vector<double> sims(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    sims[i] = cosine(query, store.row(candidates[i]));
  }
  std::vector<size_t> order(candidates.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return candidates[a] < candidates[b];
  });

  size_t keep = 0;
  switch (config.selection) {
    case SelectionMode::kMax:
      keep = 1;
      break;
    case SelectionMode::kTopK:
      keep = std::min<size_t>(config.top_k, candidates.size());
      break;
    case SelectionMode::kThreshold: {
      while (keep < order.size() && sims[order[keep]] >= config.threshold) {
        ++keep;
      }
      if (keep == 0) keep = 1;
      break;
    }
  }

  Selection out;
  out.ids.reserve(keep);
  out.similarities.reserve(keep);
  for (size_t i = 0; i < keep; ++i) {
    out.ids.push_back(candidates[order[i]]);
    out.similarities.push_back(sims[order[i]]);
  }
  return out;
}

struct LevelTrace {
  uint32_t level = 0;
  uint32_t candidate_count = 0;
  bool aggregated = false;  // level contributes to r_a
  std::vector<uint32_t> selected;
  std::vector<double> similarities;
};

struct AnchorResult {
  Vec feature;  // r_a
  std::vector<LevelTrace> levels;  // in visit order, coarsest first
  uint64_t comparison_count = 0;
};

namespace detail {

inline Vec selection_mean(const VectorStore& store,
                          std::span<const uint32_t> ids) {
  // Ids are averaged in ascending order so the result does not depend on the
  // similarity ranking.
  std::vector<uint32_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  return mean_of_rows(store, sorted);
}

}  // namespace detail

// Walks the bank from the coarsest unmasked level down to the finest one,
// narrowing candidates to the children of whatever the level above selected.
// Masked levels in between still run selection (they steer the descent) but
// are excluded from aggregation. Aggregation is two rounds of average
// pooling: per-level mean over the selected features, then a mean across
// levels; with hierarchical_aggregation off the finest unmasked level's
// round-1 mean is returned as is.
inline AnchorResult read_hierarchical(const MemoryBank& bank,
                                      std::span<const float> anchor,
                                      const RetrievalConfig& config) {
  validate_retrieval_config(config);
  if (anchor.size() != bank.dim) {
    throw InputError("anchor dimension " + std::to_string(anchor.size()) +
                     " does not match bank dimension " +
                     std::to_string(bank.dim));
  }
  const std::vector<uint32_t> mask = resolve_level_mask(config, bank);

  AnchorResult result;
  std::vector<Vec> round1;  // per aggregated level, coarsest first
  Vec finest_round1;

  auto run_level = [&](uint32_t l, std::span<const uint32_t> candidates,
                       bool aggregated) -> Selection {
    Selection sel =
        select_at_level(anchor, bank.level(l).embeddings, candidates, config);
    result.comparison_count += candidates.size();
    LevelTrace trace;
    trace.level = l;
    trace.candidate_count = uint32_t(candidates.size());
    trace.aggregated = aggregated;
    trace.selected = sel.ids;
    trace.similarities = sel.similarities;
    result.levels.push_back(std::move(trace));
    if (aggregated) {
      Vec mean = detail::selection_mean(bank.level(l).embeddings, sel.ids);
      round1.push_back(mean);
      finest_round1 = std::move(mean);
    }
    return sel;
  };

  if (config.mode == RetrievalMode::kFlat) {
    std::vector<uint32_t> all(bank.level(1).size());
    for (uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    run_level(1, all, true);
    result.feature = finest_round1;
    return result;
  }

  const uint32_t start = mask.back();
  const uint32_t stop = mask.front();
  std::vector<uint32_t> candidates(bank.level(start).size());
  for (uint32_t i = 0; i < candidates.size(); ++i) candidates[i] = i;

  for (uint32_t l = start;; --l) {
    const bool aggregated =
        std::binary_search(mask.begin(), mask.end(), l);
    Selection sel = run_level(l, candidates, aggregated);
    if (l == stop) break;
    std::vector<uint32_t> frontier;
    for (uint32_t id : sel.ids) {
      const auto& kids = bank.children(l, id);
      frontier.insert(frontier.end(), kids.begin(), kids.end());
    }
    std::sort(frontier.begin(), frontier.end());
    candidates = std::move(frontier);
  }

  if (config.hierarchical_aggregation) {
    result.feature = mean_of(round1);
  } else {
    result.feature = finest_round1;
  }
  return result;
}

struct RetrievalResult {
  std::vector<AnchorResult> per_anchor;
  uint64_t comparison_count = 0;  // total across anchors
};

// Runs the read independently for every anchor; anchors only share the bank.
inline RetrievalResult retrieve(const MemoryBank& bank, const AnchorSet& anchors,
                                const RetrievalConfig& config) {
  if (anchors.anchors.dim != bank.dim) {
    throw InputError("anchor dimension " +
                     std::to_string(anchors.anchors.dim) +
                     " does not match bank dimension " +
                     std::to_string(bank.dim));
  }
  RetrievalResult result;
  result.per_anchor.reserve(anchors.count());
  for (uint32_t a = 0; a < anchors.count(); ++a) {
    const std::string tag = "anchor " + std::to_string(a) + ": ";
    try {
      result.per_anchor.push_back(
          read_hierarchical(bank, anchors.anchors.row(a), config));
    } catch (const ConfigError& e) {
      throw ConfigError(tag + e.what());
    } catch (const InputError& e) {
      throw InputError(tag + e.what());
    } catch (const BackendError& e) {
      throw BackendError(tag + e.what());
    } catch (const Error& e) {
      throw InternalError(tag + e.what());
    }
    result.comparison_count += result.per_anchor.back().comparison_count;
  }
  return result;
}

// Maps event timestamps onto b evenly spaced time tokens over the video.
inline std::vector<uint32_t> time_tokens(std::span<const double> timestamps,
                                         double duration, uint32_t bins) {
  if (bins < 1) throw ConfigError("time token count must be at least 1");
  if (!(duration > 0.0)) {
    throw InputError("duration must be positive, got " +
                     std::to_string(duration));
  }
  std::vector<uint32_t> tokens;
  tokens.reserve(timestamps.size());
  for (double t : timestamps) {
    if (!(t >= 0.0) || t > duration) {
      throw InputError("timestamp " + std::to_string(t) +
                       " outside [0, " + std::to_string(duration) + "]");
    }
    const double raw = std::floor(t / duration * double(bins));
    tokens.push_back(uint32_t(std::min<double>(raw, double(bins - 1))));
  }
  return tokens;
}

inline nlohmann::json anchor_result_json(const AnchorResult& result,
                                         uint32_t anchor_index) {
  nlohmann::json trace = nlohmann::json::array();
  for (const LevelTrace& t : result.levels) {
    trace.push_back({{"level", t.level},
                     {"candidates", t.candidate_count},
                     {"aggregated", t.aggregated},
                     {"selected", t.selected},
                     {"similarities", t.similarities}});
  }
  return {{"anchor", anchor_index},
          {"r", detail::base64_encode(result.feature.data(),
                                      result.feature.size() * sizeof(float))},
          {"comparisons", result.comparison_count},
          {"trace", trace}};
}

}  // namespace hiermem
