// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiermem/corpus.hpp"
#include "hiermem/detail/binio.hpp"
#include "hiermem/detail/crc64.hpp"
#include "hiermem/error.hpp"
#include "hiermem/finch.hpp"
#include "hiermem/summarize.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

inline constexpr uint32_t kNoParent = 0xFFFFFFFFu;
inline constexpr std::string_view kBankMagic = "HCMB";
inline constexpr uint32_t kBankVersion = 1;

// One memory level: one summary per cluster, ordered by cluster id. Node ids
// are positions in these arrays.
struct BankLevel {
  VectorStore embeddings;
  std::vector<std::string> texts;
  std::vector<uint32_t> parent;     // node id one level up, kNoParent at top
  std::vector<uint32_t> leaf_span;  // captions underneath each node

  size_t size() const { return texts.size(); }

  bool operator==(const BankLevel&) const = default;
};

// The compact memory: summary levels 1 (finest) through L (coarsest), linked
// by parent pointers. Raw captions are not stored; each level-1 node carries
// its cluster's summary and leaf count. A flat bank is the degenerate case of
// a single level holding the captions verbatim.
class MemoryBank {
 public:
  uint32_t dim = 0;
  bool normalized = true;
  uint32_t leaf_count = 0;  // captions the bank was built from
  std::vector<BankLevel> levels_by_index;  // [0] = level 1 ... [L-1] = level L
  nlohmann::json provenance = nlohmann::json::object();

  uint32_t num_levels() const { return uint32_t(levels_by_index.size()); }

  BankLevel& level(uint32_t l) { return levels_by_index.at(l - 1); }
  const BankLevel& level(uint32_t l) const { return levels_by_index.at(l - 1); }

  size_t total_nodes() const {
    size_t n = 0;
    for (const auto& l : levels_by_index) n += l.size();
    return n;
  }

  // Children of node `id` at level l live at level l-1; level 1 has none.
  const std::vector<uint32_t>& children(uint32_t l, uint32_t id) const {
    return children_.at(l).at(id);
  }

  void rebuild_child_index() {
    children_.assign(num_levels() + 1, {});
    for (uint32_t l = 2; l <= num_levels(); ++l) {
      children_[l].assign(level(l).size(), {});
      const BankLevel& below = level(l - 1);
      for (uint32_t c = 0; c < below.size(); ++c) {
        const uint32_t p = below.parent[c];
        if (p != kNoParent && p < children_[l].size()) {
          children_[l][p].push_back(c);
        }
      }
    }
  }

  bool operator==(const MemoryBank& other) const {
    return dim == other.dim && normalized == other.normalized &&
           leaf_count == other.leaf_count &&
           levels_by_index == other.levels_by_index &&
           provenance == other.provenance;
  }

 private:
  // children_[l][id], 1-based level index; [0] and [1] stay empty.
  std::vector<std::vector<std::vector<uint32_t>>> children_;
};

// Structural invariants: every node below the top has exactly one in-range
// parent, leaf spans sum to the corpus size at every level and compose across
// levels, and rows are unit-norm when the bank claims normalization.
inline void validate_bank(const MemoryBank& bank) {
  if (bank.levels_by_index.empty()) throw InputError("bank has no levels");
  if (bank.dim == 0) throw InputError("bank dimension is zero");
  if (bank.leaf_count == 0) throw InputError("bank leaf count is zero");
  for (uint32_t l = 1; l <= bank.num_levels(); ++l) {
    const BankLevel& level = bank.level(l);
    const std::string where = "bank level " + std::to_string(l);
    if (level.size() == 0) throw InputError(where + " is empty");
    if (level.embeddings.dim != bank.dim ||
        level.embeddings.size() != level.size() ||
        level.parent.size() != level.size() ||
        level.leaf_span.size() != level.size()) {
      throw InputError(where + " has inconsistent array sizes");
    }
    const bool top = l == bank.num_levels();
    uint64_t span_sum = 0;
    for (uint32_t i = 0; i < level.size(); ++i) {
      const uint32_t p = level.parent[i];
      if (top) {
        if (p != kNoParent) {
          throw InputError(where + " node " + std::to_string(i) +
                           " has a parent above the top level");
        }
      } else if (p == kNoParent || p >= bank.level(l + 1).size()) {
        throw InputError(where + " node " + std::to_string(i) +
                         " has parent id " + std::to_string(p) +
                         " out of range");
      }
      if (level.leaf_span[i] == 0) {
        throw InputError(where + " node " + std::to_string(i) +
                         " has zero leaf span");
      }
      span_sum += level.leaf_span[i];
    }
    if (span_sum != bank.leaf_count) {
      throw InputError(where + " leaf spans sum to " +
                       std::to_string(span_sum) + ", expected " +
                       std::to_string(bank.leaf_count));
    }
    if (!all_finite(level.embeddings.data)) {
      throw InputError(where + " contains non-finite embeddings");
    }
    if (bank.normalized) {
      for (uint32_t i = 0; i < level.size(); ++i) {
        const double n = l2_norm(level.embeddings.row(i));
        if (std::abs(n - 1.0) > 1e-5) {
          throw InputError(where + " node " + std::to_string(i) +
                           " is not unit-norm (|v| = " + std::to_string(n) +
                           ") in a normalized bank");
        }
      }
    }
  }
  // Spans must compose: each parent's span is the sum of its children's.
  for (uint32_t l = 2; l <= bank.num_levels(); ++l) {
    std::vector<uint64_t> sums(bank.level(l).size(), 0);
    const BankLevel& below = bank.level(l - 1);
    for (uint32_t c = 0; c < below.size(); ++c) {
      sums[below.parent[c]] += below.leaf_span[c];
    }
    for (uint32_t p = 0; p < bank.level(l).size(); ++p) {
      if (sums[p] != bank.level(l).leaf_span[p]) {
        throw InputError("bank level " + std::to_string(l) + " node " +
                         std::to_string(p) + " leaf span " +
                         std::to_string(bank.level(l).leaf_span[p]) +
                         " does not match its children's total " +
                         std::to_string(sums[p]));
      }
    }
  }
}

struct BuildBankOptions {
  bool flat = false;        // one level, captions verbatim, no clustering
  FinchOptions finch;
  int workers = 1;          // parallel summary requests per level
  std::string built_at;     // provenance timestamp, now() when empty
  nlohmann::json extra_provenance = nlohmann::json::object();
  // When set, receives the partition hierarchy of a non-flat build; callers
  // that need leaf membership (the eval harness) read it from here since the
  // bank itself only keeps spans.
  PartitionHierarchy* capture_hierarchy = nullptr;
};

namespace detail {

inline void stamp_provenance(MemoryBank& bank, const Corpus& corpus,
                             std::string_view summarizer_kind,
                             const CompactionNotes& notes,
                             const BuildBankOptions& options) {
  bank.provenance = options.extra_provenance;
  bank.provenance["schema"] = "hiermem.bank/1";
  bank.provenance["built_at"] = options.built_at.empty()
                                    ? SummaryCache::now_iso8601()
                                    : options.built_at;
  bank.provenance["corpus_hash"] = corpus_hash(corpus);
  bank.provenance["summarizer"] = std::string(summarizer_kind);
  bank.provenance["normalized"] = bank.normalized;
  bank.provenance["structure"] = options.flat ? "flat" : "hierarchical";
  if (!options.flat) {
    bank.provenance["weighted_centroids"] = options.finch.weighted_centroids;
    bank.provenance["final_merge"] = options.finch.final_merge;
  }
  bank.provenance["leaf_count"] = corpus.size();
  bank.provenance["levels"] = bank.num_levels();
  bank.provenance["fallback_count"] = notes.fallback_count();
}

}  // namespace detail

// Clusters the corpus bottom-up and compacts every level: level 1 summarizes
// caption clusters, each higher level summarizes the summaries below it.
// Flat mode skips all of that and stores the captions as a single level.
inline MemoryBank build_bank(const Corpus& corpus, Summarizer& summarizer,
                             CompactionNotes& notes,
                             const BuildBankOptions& options = {}) {
  if (corpus.size() == 0) {
    throw InputError("cannot build a bank from an empty corpus");
  }

  MemoryBank bank;
  bank.dim = corpus.dim();
  bank.normalized = corpus.normalized;
  bank.leaf_count = uint32_t(corpus.size());

  if (options.flat) {
    BankLevel level;
    level.embeddings = corpus.vectors;
    level.texts.reserve(corpus.size());
    for (const auto& rec : corpus.records) level.texts.push_back(rec.text);
    level.parent.assign(corpus.size(), kNoParent);
    level.leaf_span.assign(corpus.size(), 1);
    bank.levels_by_index.push_back(std::move(level));
    detail::stamp_provenance(bank, corpus, "none", notes, options);
    bank.rebuild_child_index();
    validate_bank(bank);
    return bank;
  }

  const PartitionHierarchy hierarchy = build_hierarchy(corpus, options.finch);
  if (options.capture_hierarchy) *options.capture_hierarchy = hierarchy;
  bank.levels_by_index.resize(hierarchy.depth());

  std::vector<std::string_view> input_texts;
  input_texts.reserve(corpus.size());
  for (const auto& rec : corpus.records) input_texts.push_back(rec.text);
  const VectorStore* input_embeddings = &corpus.vectors;

  for (uint32_t l = 1; l <= hierarchy.depth(); ++l) {
    std::vector<ClusterSummary> summaries =
        compact_level(hierarchy, l, input_texts, *input_embeddings, summarizer,
                      bank.normalized, notes, options.workers);

    BankLevel& out = bank.level(l);
    out.embeddings.dim = bank.dim;
    out.embeddings.reserve_rows(summaries.size());
    out.texts.reserve(summaries.size());
    for (const ClusterSummary& s : summaries) {
      if (s.embedding.size() != bank.dim) {
        throw InternalError("summary embedding dimension mismatch at level " +
                            std::to_string(l));
      }
      out.embeddings.push_row(s.embedding);
      out.texts.push_back(s.text);
    }

    // Parent of cluster c at level l is the level l+1 cluster any of its
    // leaves lands in; composed assignments make that consistent.
    out.parent.assign(summaries.size(), kNoParent);
    if (l < hierarchy.depth()) {
      const auto& here = hierarchy.level(l).assignment;
      const auto& above = hierarchy.level(l + 1).assignment;
      for (size_t leaf = 0; leaf < here.size(); ++leaf) {
        out.parent[here[leaf]] = above[leaf];
      }
    }
    out.leaf_span.assign(summaries.size(), 0);
    for (uint32_t cluster : hierarchy.level(l).assignment) {
      ++out.leaf_span[cluster];
    }

    input_texts.assign(out.texts.begin(), out.texts.end());
    input_embeddings = &out.embeddings;
  }

  detail::stamp_provenance(bank, corpus, summarizer.kind(), notes, options);
  bank.rebuild_child_index();
  validate_bank(bank);
  return bank;
}

inline std::vector<char> serialize_bank(const MemoryBank& bank) {
  detail::ByteWriter w;
  w.put_bytes(kBankMagic.data(), kBankMagic.size());
  w.put_u32(kBankVersion);
  w.put_u32(bank.dim);
  w.put_u32(bank.num_levels());
  w.put_u32(bank.normalized ? 1 : 0);
  w.put_u32(bank.leaf_count);
  for (const auto& level : bank.levels_by_index) {
    w.put_u32(uint32_t(level.size()));
  }
  for (const auto& level : bank.levels_by_index) {
    w.put_bytes(level.embeddings.data.data(),
                level.embeddings.data.size() * sizeof(float));
  }
  for (const auto& level : bank.levels_by_index) {
    for (const auto& text : level.texts) w.put_str(text);
  }
  for (const auto& level : bank.levels_by_index) {
    for (size_t i = 0; i < level.size(); ++i) {
      w.put_u32(level.parent[i]);
      w.put_u32(level.leaf_span[i]);
    }
  }
  w.put_str(bank.provenance.dump());
  const uint64_t crc = detail::crc64(w.bytes().data(), w.bytes().size());
  w.put_u64(crc);
  return std::move(w).take();
}

inline void save_bank(const MemoryBank& bank, const std::string& path) {
  const auto bytes = serialize_bank(bank);
  detail::write_file_bytes(path, bytes.data(), bytes.size());
}

inline MemoryBank deserialize_bank(const char* data, size_t size,
                                   const std::string& origin) {
  if (size < kBankMagic.size() + 16) {
    throw InputError(origin + ": too small to be a memory bank file");
  }
  uint64_t stored_crc;
  std::memcpy(&stored_crc, data + size - 8, 8);
  const uint64_t actual_crc = detail::crc64(data, size - 8);
  if (stored_crc != actual_crc) {
    throw InputError(origin + ": checksum mismatch, file is corrupt");
  }

  detail::ByteReader r(data, size - 8, origin);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string_view(magic, 4) != kBankMagic) {
    throw InputError(origin + ": bad magic, not a memory bank file");
  }
  const uint32_t version = r.get_u32();
  if (version != kBankVersion) {
    throw InputError(origin + ": unsupported bank version " +
                     std::to_string(version));
  }

  MemoryBank bank;
  bank.dim = r.get_u32();
  const uint32_t level_count = r.get_u32();
  bank.normalized = r.get_u32() != 0;
  bank.leaf_count = r.get_u32();
  if (bank.dim == 0 || bank.dim > (1u << 16)) {
    throw InputError(origin + ": implausible dimension " +
                     std::to_string(bank.dim));
  }
  if (level_count == 0 || level_count > 64) {
    throw InputError(origin + ": implausible level count " +
                     std::to_string(level_count));
  }
  std::vector<uint32_t> counts(level_count);
  for (auto& c : counts) {
    c = r.get_u32();
    if (c == 0) throw InputError(origin + ": empty level in header");
  }

  bank.levels_by_index.resize(level_count);
  for (uint32_t l = 0; l < level_count; ++l) {
    auto& store = bank.levels_by_index[l].embeddings;
    store.dim = bank.dim;
    store.data.resize(size_t(counts[l]) * bank.dim);
    r.get_bytes(store.data.data(), store.data.size() * sizeof(float));
  }
  for (uint32_t l = 0; l < level_count; ++l) {
    auto& level = bank.levels_by_index[l];
    level.texts.reserve(counts[l]);
    for (uint32_t i = 0; i < counts[l]; ++i) level.texts.push_back(r.get_str());
  }
  for (uint32_t l = 0; l < level_count; ++l) {
    auto& level = bank.levels_by_index[l];
    level.parent.resize(counts[l]);
    level.leaf_span.resize(counts[l]);
    for (uint32_t i = 0; i < counts[l]; ++i) {
      level.parent[i] = r.get_u32();
      level.leaf_span[i] = r.get_u32();
    }
  }
  try {
    bank.provenance = nlohmann::json::parse(r.get_str());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(origin + ": provenance block is not valid JSON: " +
                     e.what());
  }
  if (r.remaining() != 0) {
    throw InputError(origin + ": " + std::to_string(r.remaining()) +
                     " trailing bytes after provenance");
  }

  bank.rebuild_child_index();
  validate_bank(bank);
  return bank;
}

inline MemoryBank load_bank(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  return deserialize_bank(bytes.data(), bytes.size(), path);
}

// Inspection figures: per-level sizes and spans, total compact units, and the
// compaction ratio (memory units kept per caption).
inline nlohmann::json bank_stats(const MemoryBank& bank) {
  nlohmann::json per_level = nlohmann::json::array();
  for (uint32_t l = 1; l <= bank.num_levels(); ++l) {
    const BankLevel& level = bank.level(l);
    uint64_t span_total = 0;
    for (uint32_t s : level.leaf_span) span_total += s;
    per_level.push_back(
        {{"level", l},
         {"nodes", level.size()},
         {"mean_leaf_span", double(span_total) / double(level.size())}});
  }
  nlohmann::json j;
  j["dim"] = bank.dim;
  j["normalized"] = bank.normalized;
  j["leaf_count"] = bank.leaf_count;
  j["levels"] = per_level;
  j["total_units"] = bank.total_nodes();
  j["compaction_ratio"] = double(bank.total_nodes()) / double(bank.leaf_count);
  j["fallback_count"] = bank.provenance.value("fallback_count", 0u);
  j["provenance"] = bank.provenance;
  return j;
}

}  // namespace hiermem
