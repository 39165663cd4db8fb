// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiermem/config.hpp"
#include "hiermem/corpus.hpp"
#include "hiermem/error.hpp"
#include "hiermem/membank.hpp"
#include "hiermem/retrieval.hpp"
#include "hiermem/summarize.hpp"

namespace hiermem {

namespace detail {

// mt19937_64 has a standard-mandated sequence, so for a fixed seed the
// generated corpora are stable across runs and toolchains up to libm's
// last-bit variation in log/sin/cos.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return double(eng_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vec unit_vector(uint32_t dim) {
    Vec v(dim);
    for (auto& x : v) x = float(gaussian());
    renormalize_if_possible(v);
    return v;
  }

  // Unit vector near `center`: center + scale * gaussian noise, renormalized.
  Vec perturbed(const Vec& center, double scale) {
    Vec v(center.size());
    for (size_t d = 0; d < v.size(); ++d) {
      v[d] = float(double(center[d]) + scale * gaussian());
    }
    renormalize_if_possible(v);
    return v;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

struct EvalConfig {
  uint64_t seed = 7;
  uint32_t supers = 5;               // planted super-cluster count
  uint32_t clusters_per_super = 10;  // planted clusters per super
  uint32_t copies_per_cluster = 10;  // noisy copies (leaves) per cluster
  uint32_t dim = 32;
  uint32_t queries = 100;            // per run; keep >= 100 for percentiles
  double super_spread = 0.35;        // prototype offset within a super
  double noise = 0.05;               // leaf/query noise around a prototype
  std::vector<uint32_t> k_grid = {1, 5, 10, 20};
  uint32_t default_k = 10;           // K for the max/threshold rows
  double threshold = 0.5;

  uint32_t leaf_count() const {
    return supers * clusters_per_super * copies_per_cluster;
  }
};

// Synthetic corpus with known structure: leaves are noisy copies of cluster
// prototypes, prototypes are grouped around super-cluster centers. Leaf row
// g*copies..(g+1)*copies-1 belongs to planted cluster g.
struct PlantedCorpus {
  Corpus corpus;
  VectorStore queries;               // one probe per query, unit norm
  std::vector<uint32_t> query_cluster;  // planted cluster of each probe
  uint32_t planted_clusters = 0;
  uint32_t copies_per_cluster = 0;
};

inline PlantedCorpus generate_planted_corpus(const EvalConfig& cfg) {
  if (cfg.supers == 0 || cfg.clusters_per_super == 0 ||
      cfg.copies_per_cluster == 0) {
    throw InputError("planted generator needs at least one super, cluster, "
                     "and copy");
  }
  if (cfg.dim < 2) throw InputError("planted generator needs dim >= 2");

  detail::Rng rng(cfg.seed);
  PlantedCorpus out;
  out.planted_clusters = cfg.supers * cfg.clusters_per_super;
  out.copies_per_cluster = cfg.copies_per_cluster;

  std::vector<Vec> prototypes;
  prototypes.reserve(out.planted_clusters);
  for (uint32_t s = 0; s < cfg.supers; ++s) {
    const Vec center = rng.unit_vector(cfg.dim);
    for (uint32_t c = 0; c < cfg.clusters_per_super; ++c) {
      prototypes.push_back(rng.perturbed(center, cfg.super_spread));
    }
  }

  out.corpus.normalized = true;
  out.corpus.vectors.dim = cfg.dim;
  out.corpus.vectors.reserve_rows(cfg.leaf_count());
  out.corpus.records.reserve(cfg.leaf_count());
  for (uint32_t g = 0; g < out.planted_clusters; ++g) {
    for (uint32_t i = 0; i < cfg.copies_per_cluster; ++i) {
      out.corpus.vectors.push_row(rng.perturbed(prototypes[g], cfg.noise));
      CaptionRecord rec;
      rec.id = "g" + std::to_string(g) + "i" + std::to_string(i);
      rec.text = "planted cluster " + std::to_string(g) + " copy " +
                 std::to_string(i);
      out.corpus.records.push_back(std::move(rec));
    }
  }

  out.queries.dim = cfg.dim;
  out.queries.reserve_rows(cfg.queries);
  out.query_cluster.reserve(cfg.queries);
  for (uint32_t q = 0; q < cfg.queries; ++q) {
    const uint32_t g = q % out.planted_clusters;
    out.queries.push_row(rng.perturbed(prototypes[g], cfg.noise));
    out.query_cluster.push_back(g);
  }
  return out;
}

struct EvalRun {
  std::string construction;  // flat | medoid | centroid
  std::string selection;     // top_k | max | threshold
  uint32_t k = 0;
  double recall = 0.0;       // planted-membership hit rate over queries
  double mean_comparisons = 0.0;
  double latency_ms_p50 = 0.0;
  double latency_ms_p95 = 0.0;
};

struct EvalReport {
  EvalConfig config;
  nlohmann::json bank_stats_by_construction = nlohmann::json::object();
  std::vector<EvalRun> runs;

  const EvalRun& run(const std::string& construction,
                     const std::string& selection, uint32_t k) const {
    for (const EvalRun& r : runs) {
      if (r.construction == construction && r.selection == selection &&
          r.k == k) {
        return r;
      }
    }
    throw InternalError("eval report has no run " + construction + "/" +
                        selection + "/k=" + std::to_string(k));
  }
};

namespace detail {

inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t idx = size_t(p * double(values.size() - 1));
  return values[idx];
}

// planted_sets[n] = planted clusters with at least one leaf under finest
// node n. Identity mapping for flat banks (node == leaf).
inline std::vector<std::unordered_set<uint32_t>> planted_membership(
    const PlantedCorpus& data, const PartitionHierarchy* hierarchy) {
  const uint32_t copies = data.copies_per_cluster;
  if (hierarchy == nullptr) {
    std::vector<std::unordered_set<uint32_t>> sets(data.corpus.size());
    for (uint32_t leaf = 0; leaf < data.corpus.size(); ++leaf) {
      sets[leaf].insert(leaf / copies);
    }
    return sets;
  }
  const auto& assign = hierarchy->level(1).assignment;
  std::vector<std::unordered_set<uint32_t>> sets(
      hierarchy->level(1).num_clusters);
  for (uint32_t leaf = 0; leaf < assign.size(); ++leaf) {
    sets[assign[leaf]].insert(leaf / copies);
  }
  return sets;
}

inline EvalRun measure_run(
    const MemoryBank& bank, const PlantedCorpus& data,
    const std::vector<std::unordered_set<uint32_t>>& planted_sets,
    const RetrievalConfig& rc, std::string construction) {
  EvalRun run;
  run.construction = std::move(construction);
  run.selection = to_string(rc.selection);
  run.k = rc.top_k;

  uint64_t hits = 0;
  double comparison_sum = 0.0;
  std::vector<double> latencies_ms;
  latencies_ms.reserve(data.queries.size());

  for (size_t q = 0; q < data.queries.size(); ++q) {
    const auto t0 = std::chrono::steady_clock::now();
    const AnchorResult res = read_hierarchical(bank, data.queries.row(q), rc);
    const auto t1 = std::chrono::steady_clock::now();
    latencies_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
    comparison_sum += double(res.comparison_count);

    // Finest aggregated level drives the hit check; its trace entry is the
    // last one recorded.
    const LevelTrace* finest = nullptr;
    for (const LevelTrace& t : res.levels) {
      if (t.aggregated) finest = &t;
    }
    if (finest == nullptr) throw InternalError("trace has no aggregated level");
    const uint32_t want = data.query_cluster[q];
    bool hit = false;
    if (finest->level == 1) {
      for (uint32_t id : finest->selected) {
        if (planted_sets[id].count(want)) {
          hit = true;
          break;
        }
      }
    }
    hits += hit ? 1 : 0;
  }

  run.recall = double(hits) / double(data.queries.size());
  run.mean_comparisons = comparison_sum / double(data.queries.size());
  run.latency_ms_p50 = percentile(latencies_ms, 0.50);
  run.latency_ms_p95 = percentile(latencies_ms, 0.95);
  return run;
}

}  // namespace detail

inline nlohmann::json eval_report_json(const EvalReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const EvalRun& r : report.runs) {
    runs.push_back({{"construction", r.construction},
                    {"selection", r.selection},
                    {"k", r.k},
                    {"recall", r.recall},
                    {"mean_comparisons", r.mean_comparisons},
                    {"latency_ms_p50", r.latency_ms_p50},
                    {"latency_ms_p95", r.latency_ms_p95}});
  }
  return {{"schema", "hiermem.eval/1"},
          {"seed", report.config.seed},
          {"leaves", report.config.leaf_count()},
          {"dim", report.config.dim},
          {"queries", report.config.queries},
          {"k_grid", report.config.k_grid},
          {"banks", report.bank_stats_by_construction},
          {"runs", runs}};
}

// Builds one bank per construction variant over the same planted corpus and
// measures recall, comparison counts, and per-query latency for the K sweep
// (top_k selection) plus the max and threshold rules at the default K.
// Everything except the latency figures is deterministic in (config, seed).
inline EvalReport eval_synthetic(const EvalConfig& cfg) {
  const PlantedCorpus data = generate_planted_corpus(cfg);

  EvalReport report;
  report.config = cfg;

  struct Variant {
    std::string name;
    MemoryBank bank;
    std::vector<std::unordered_set<uint32_t>> planted_sets;
  };
  std::vector<Variant> variants;

  CompactionNotes notes;
  BuildBankOptions build;
  build.built_at = "1970-01-01T00:00:00Z";  // keep reports reproducible

  {
    Variant flat;
    flat.name = "flat";
    MedoidSummarizer unused;
    BuildBankOptions opts = build;
    opts.flat = true;
    flat.bank = build_bank(data.corpus, unused, notes, opts);
    flat.planted_sets = detail::planted_membership(data, nullptr);
    variants.push_back(std::move(flat));
  }
  for (const char* kind : {"medoid", "centroid"}) {
    Variant v;
    v.name = kind;
    PartitionHierarchy hierarchy;
    BuildBankOptions opts = build;
    opts.capture_hierarchy = &hierarchy;
    if (std::string_view(kind) == "medoid") {
      MedoidSummarizer summarizer;
      v.bank = build_bank(data.corpus, summarizer, notes, opts);
    } else {
      CentroidSummarizer summarizer;
      v.bank = build_bank(data.corpus, summarizer, notes, opts);
    }
    v.planted_sets = detail::planted_membership(data, &hierarchy);
    variants.push_back(std::move(v));
  }

  for (const Variant& v : variants) {
    report.bank_stats_by_construction[v.name] = bank_stats(v.bank);

    RetrievalConfig rc;
    rc.threshold = cfg.threshold;
    rc.mode = v.name == "flat" ? RetrievalMode::kFlat
                               : RetrievalMode::kHierarchical;
    for (uint32_t k : cfg.k_grid) {
      rc.selection = SelectionMode::kTopK;
      rc.top_k = k;
      report.runs.push_back(
          detail::measure_run(v.bank, data, v.planted_sets, rc, v.name));
    }
    rc.top_k = cfg.default_k;
    for (SelectionMode mode :
         {SelectionMode::kMax, SelectionMode::kThreshold}) {
      rc.selection = mode;
      report.runs.push_back(
          detail::measure_run(v.bank, data, v.planted_sets, rc, v.name));
    }
  }

  for (const EvalRun& r : report.runs) {
    if (r.recall < 0.0 || r.recall > 1.0 || r.mean_comparisons < 0.0) {
      throw InternalError("eval produced an out-of-range metric");
    }
  }
  return report;
}

}  // namespace hiermem
