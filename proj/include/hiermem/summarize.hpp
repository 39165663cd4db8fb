// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hiermem/detail/binio.hpp"
#include "hiermem/detail/hash.hpp"
#include "hiermem/detail/semaphore.hpp"
#include "hiermem/embedder.hpp"
#include "hiermem/error.hpp"
#include "hiermem/finch.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

// One compact memory cell: a cluster reduced to a single sentence plus its
// embedding.
struct ClusterSummary {
  uint32_t level = 0;
  uint32_t cluster_id = 0;
  std::string text;
  Vec embedding;
  uint32_t member_count = 0;

  bool operator==(const ClusterSummary&) const = default;
};

// Member texts plus row indices into their shared embedding store.
struct ClusterMembers {
  std::vector<std::string_view> texts;
  const VectorStore* embeddings = nullptr;
  std::vector<uint32_t> rows;
};

// Warnings and fallback bookkeeping; shared across worker threads.
class CompactionNotes {
 public:
  void warn(std::string message) {
    std::lock_guard lock(mu_);
    warnings_.push_back(std::move(message));
  }
  void count_fallback() { fallbacks_.fetch_add(1, std::memory_order_relaxed); }

  uint32_t fallback_count() const { return fallbacks_.load(); }
  std::vector<std::string> warnings() const {
    std::lock_guard lock(mu_);
    return warnings_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> warnings_;
  std::atomic<uint32_t> fallbacks_{0};
};

class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string kind() const = 0;
  virtual ClusterSummary summarize(uint32_t level, uint32_t cluster_id,
                                   const ClusterMembers& members,
                                   bool normalized,
                                   CompactionNotes& notes) = 0;
};

namespace detail {

// Medoid rule shared by the medoid backend and the LLM fallback: the member
// closest (cosine) to the member mean, ties to the smallest member position.
inline ClusterSummary medoid_summary(uint32_t level, uint32_t cluster_id,
                                     const ClusterMembers& members) {
  if (members.rows.empty()) {
    throw InternalError("summarize: cluster has no members");
  }
  const Vec center = mean_of_rows(*members.embeddings, members.rows);
  double best = -std::numeric_limits<double>::infinity();
  size_t best_k = 0;
  for (size_t k = 0; k < members.rows.size(); ++k) {
    const double s = cosine(members.embeddings->row(members.rows[k]), center);
    if (s > best) {
      best = s;
      best_k = k;
    }
  }
  ClusterSummary summary;
  summary.level = level;
  summary.cluster_id = cluster_id;
  summary.text = std::string(members.texts[best_k]);
  auto row = members.embeddings->row(members.rows[best_k]);
  summary.embedding.assign(row.begin(), row.end());
  summary.member_count = uint32_t(members.rows.size());
  return summary;
}

}  // namespace detail

// Picks one member verbatim as the cluster's representative.
class MedoidSummarizer final : public Summarizer {
 public:
  std::string kind() const override { return "medoid"; }

  ClusterSummary summarize(uint32_t level, uint32_t cluster_id,
                           const ClusterMembers& members, bool /*normalized*/,
                           CompactionNotes& /*notes*/) override {
    return detail::medoid_summary(level, cluster_id, members);
  }
};

// Averages member embeddings; the text is a placeholder since no member
// sentence stands for the whole cluster.
class CentroidSummarizer final : public Summarizer {
 public:
  std::string kind() const override { return "centroid"; }

  ClusterSummary summarize(uint32_t level, uint32_t cluster_id,
                           const ClusterMembers& members, bool normalized,
                           CompactionNotes& /*notes*/) override {
    if (members.rows.empty()) {
      throw InternalError("summarize: cluster has no members");
    }
    ClusterSummary summary;
    summary.level = level;
    summary.cluster_id = cluster_id;
    summary.member_count = uint32_t(members.rows.size());
    summary.text = "⟨centroid of " +
                   std::to_string(members.rows.size()) + " members⟩";
    summary.embedding = mean_of_rows(*members.embeddings, members.rows);
    if (normalized) {
      const double n = l2_norm(summary.embedding);
      if (n < 1e-12) {
        throw InputError("centroid summarizer: level " + std::to_string(level) +
                         " cluster " + std::to_string(cluster_id) +
                         " has a zero-norm mean, cannot renormalize");
      }
      for (float& x : summary.embedding) x = float(double(x) / n);
    }
    return summary;
  }
};

// Instruction template sent to the LLM backend. Versioned; the id is recorded
// in bank provenance so a bank names the template that built it.
inline constexpr std::string_view kSummaryTemplateId = "cluster-summary/v1";
inline constexpr std::string_view kSummarySystemPrompt =
    "You are a sentence summarizer.";

inline std::string render_summary_prompt(std::span<const std::string_view> texts,
                                         uint32_t max_words) {
  std::ostringstream os;
  os << "Summarize the following sentences into exactly one sentence of at "
        "most "
     << max_words
     << " words. Respond with only the summary sentence, without quotes, "
        "numbering, or any additional explanation.\n\nSentences:\n";
  for (size_t i = 0; i < texts.size(); ++i) {
    os << (i + 1) << ". " << texts[i] << "\n";
  }
  return os.str();
}

struct LlmConfig {
  std::string url;         // e.g. http://127.0.0.1:9200/chat
  std::string model;       // backend model name, part of the cache key
  std::string auth_token;  // "Authorization: Bearer <token>" if set
  int timeout_ms = 30000;
  int retries = 2;
  int in_flight = 4;
  uint32_t max_summary_words = 30;
  std::string cache_dir;   // empty disables the reply cache
};

// On-disk reply cache keyed by (template id, model, max words, sorted member
// texts). One JSON file per key, written atomically.
class SummaryCache {
 public:
  explicit SummaryCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }

  static std::string key(std::string_view model, uint32_t max_words,
                         std::span<const std::string_view> texts) {
    std::vector<std::string_view> sorted(texts.begin(), texts.end());
    std::sort(sorted.begin(), sorted.end());
    uint64_t h = detail::fnv1a64(kSummaryTemplateId);
    h = detail::fnv1a64("\x1f", h);
    h = detail::fnv1a64(model, h);
    h = detail::fnv1a64("\x1f", h);
    h = detail::fnv1a64(std::to_string(max_words), h);
    for (auto t : sorted) {
      h = detail::fnv1a64("\x1e", h);
      h = detail::fnv1a64(t, h);
    }
    // Second pass with a different seed widens the key to 128 bits.
    uint64_t h2 = detail::fnv1a64("hiermem.cache/1", h);
    return detail::hex64(h) + detail::hex64(h2);
  }

  bool lookup(const std::string& key, std::string& text_out) const {
    if (!enabled()) return false;
    const auto path = file_for(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return false;
    try {
      auto bytes = detail::read_file_bytes(path.string());
      auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
      text_out = j.at("text").get<std::string>();
      return true;
    } catch (const std::exception&) {
      return false;  // unreadable cache entries are treated as misses
    }
  }

  void store(const std::string& key, const std::string& text,
             std::string_view backend) const {
    if (!enabled()) return;
    nlohmann::json j{{"key", key},
                     {"text", text},
                     {"created_at", now_iso8601()},
                     {"backend", std::string(backend)}};
    const auto path = file_for(key);
    const auto tmp = path.string() + ".tmp." +
                     std::to_string(uint64_t(std::hash<std::thread::id>{}(
                         std::this_thread::get_id())));
    const std::string body = j.dump();
    detail::write_file_bytes(tmp, body.data(), body.size());
    std::filesystem::rename(tmp, path);
  }

  static std::string now_iso8601() {
    const auto t = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

 private:
  std::filesystem::path file_for(const std::string& key) const {
    return std::filesystem::path(dir_) / (key + ".json");
  }
  std::string dir_;
};

namespace detail {

inline std::string strip_summary_reply(std::string_view reply) {
  std::string s = trim_copy(reply);
  auto strip_pair = [&](std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() &&
        s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
      s = s.substr(open.size(), s.size() - open.size() - close.size());
      return true;
    }
    return false;
  };
  if (strip_pair("\"", "\"") || strip_pair("'", "'") ||
      strip_pair("“", "”") || strip_pair("‘", "’")) {
    s = trim_copy(s);
  }
  return s;
}

inline size_t word_count(std::string_view s) {
  size_t count = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

}  // namespace detail

// Summarizes through a chat-style HTTP endpoint: POST {"model", "messages"}
// -> {"content"}. Any failure that survives the retry budget and one
// re-prompt degrades to the medoid rule instead of failing the build.
class LlmSummarizer final : public Summarizer {
 public:
  LlmSummarizer(LlmConfig config, Embedder& embedder)
      : config_(std::move(config)),
        url_(detail::split_url(config_.url)),
        embedder_(embedder),
        cache_(config_.cache_dir),
        gate_(config_.in_flight) {}

  std::string kind() const override { return "llm_http"; }

  ClusterSummary summarize(uint32_t level, uint32_t cluster_id,
                           const ClusterMembers& members, bool normalized,
                           CompactionNotes& notes) override {
    const std::string cache_key =
        SummaryCache::key(config_.model, config_.max_summary_words,
                          members.texts);
    std::string text;
    if (!cache_.lookup(cache_key, text)) {
      try {
        text = request_summary(members);
        cache_.store(cache_key, text, kind());
      } catch (const Error& e) {
        notes.count_fallback();
        notes.warn("level " + std::to_string(level) + " cluster " +
                   std::to_string(cluster_id) + ": " + e.what() +
                   "; fell back to medoid");
        return detail::medoid_summary(level, cluster_id, members);
      }
    }

    // Embedding backends truncate long inputs themselves; past a CLIP-sized
    // token budget that truncation becomes lossy, so flag it.
    if (detail::word_count(text) > 77) {
      notes.warn("level " + std::to_string(level) + " cluster " +
                 std::to_string(cluster_id) +
                 ": summary exceeds the embedder token budget estimate and "
                 "may be truncated");
    }

    ClusterSummary summary;
    summary.level = level;
    summary.cluster_id = cluster_id;
    summary.text = text;
    summary.member_count = uint32_t(members.rows.size());
    summary.embedding = embedder_.embed(text);
    if (normalized) renormalize_if_possible(summary.embedding);
    if (members.embeddings->dim != 0 &&
        summary.embedding.size() != members.embeddings->dim) {
      throw BackendError("summary embedding dimension " +
                         std::to_string(summary.embedding.size()) +
                         " does not match corpus dimension " +
                         std::to_string(members.embeddings->dim));
    }
    return summary;
  }

 private:
  std::string request_summary(const ClusterMembers& members) {
    std::string prompt =
        render_summary_prompt(members.texts, config_.max_summary_words);
    std::string reply = detail::strip_summary_reply(post_chat(prompt));
    if (reply.empty()) throw BackendError("LLM returned an empty summary");
    if (detail::word_count(reply) > config_.max_summary_words) {
      // One corrective round before giving up on the backend.
      prompt += "\nYour previous reply exceeded " +
                std::to_string(config_.max_summary_words) +
                " words. Respond again with one sentence of at most " +
                std::to_string(config_.max_summary_words) +
                " words and nothing else.";
      reply = detail::strip_summary_reply(post_chat(prompt));
      if (reply.empty()) throw BackendError("LLM returned an empty summary");
      if (detail::word_count(reply) > config_.max_summary_words) {
        throw BackendError("LLM summary still exceeds " +
                           std::to_string(config_.max_summary_words) +
                           " words after one re-prompt");
      }
    }
    return reply;
  }

  std::string post_chat(const std::string& user_prompt) {
    detail::Semaphore::Guard guard(gate_);
    nlohmann::json body{
        {"model", config_.model},
        {"messages",
         {{{"role", "system"}, {"content", std::string(kSummarySystemPrompt)}},
          {{"role", "user"}, {"content", user_prompt}}}}};
    const int attempts = config_.retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(50 * (1 << (attempt - 2))));
      }
      httplib::Client cli(url_.base);
      cli.set_connection_timeout(0, config_.timeout_ms * 1000);
      cli.set_read_timeout(config_.timeout_ms / 1000,
                           (config_.timeout_ms % 1000) * 1000);
      if (!config_.auth_token.empty()) {
        cli.set_default_headers(
            {{"Authorization", "Bearer " + config_.auth_token}});
      }
      auto res = cli.Post(url_.path, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("content").get<std::string>();
      } catch (const std::exception& e) {
        last_error = std::string("bad response: ") + e.what();
        continue;
      }
    }
    throw BackendError("LLM backend " + config_.url + " failed after " +
                       std::to_string(attempts) + " attempts (" + last_error +
                       ")");
  }

  LlmConfig config_;
  detail::ParsedUrl url_;
  Embedder& embedder_;
  SummaryCache cache_;
  detail::Semaphore gate_;
};

// Produces exactly one summary per cluster of the given level, ordered by
// cluster id. Inputs are the raw captions for level 1 and the previous
// level's summaries above that, so input count must equal the leaf count at
// level 1 and the previous level's cluster count otherwise.
//
// A failing cluster aborts the whole level: compaction is complete or absent.
// Workers > 1 only helps remote backends; output order is by cluster id
// regardless.
inline std::vector<ClusterSummary> compact_level(
    const PartitionHierarchy& hierarchy, uint32_t level,
    std::span<const std::string_view> input_texts,
    const VectorStore& input_embeddings, Summarizer& summarizer,
    bool normalized, CompactionNotes& notes, int workers = 1) {
  if (level < 1 || level > hierarchy.depth()) {
    throw InputError("compact_level: level " + std::to_string(level) +
                     " out of range [1, " + std::to_string(hierarchy.depth()) +
                     "]");
  }
  const PartitionLevel& part = hierarchy.level(level);

  // members[c] = input units belonging to cluster c. For level 1 the units
  // are leaves; above that they are the previous level's clusters.
  std::vector<std::vector<uint32_t>> members(part.num_clusters);
  if (level == 1) {
    for (size_t leaf = 0; leaf < part.assignment.size(); ++leaf) {
      members[part.assignment[leaf]].push_back(uint32_t(leaf));
    }
  } else {
    const PartitionLevel& below = hierarchy.level(level - 1);
    std::vector<uint32_t> parent_of(below.num_clusters,
                                    std::numeric_limits<uint32_t>::max());
    for (size_t leaf = 0; leaf < part.assignment.size(); ++leaf) {
      parent_of[below.assignment[leaf]] = part.assignment[leaf];
    }
    for (uint32_t p = 0; p < below.num_clusters; ++p) {
      members[parent_of[p]].push_back(p);
    }
  }

  if (input_texts.size() != input_embeddings.size()) {
    throw InternalError("compact_level: text/embedding count mismatch");
  }
  const size_t expected_inputs =
      level == 1 ? part.assignment.size()
                 : size_t(hierarchy.level(level - 1).num_clusters);
  if (input_texts.size() != expected_inputs) {
    throw InputError("compact_level: level " + std::to_string(level) +
                     " expects " + std::to_string(expected_inputs) +
                     " inputs, got " + std::to_string(input_texts.size()));
  }

  std::vector<ClusterSummary> summaries(part.num_clusters);
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::atomic<uint32_t> next{0};
  auto work = [&] {
    for (uint32_t c = next.fetch_add(1); c < part.num_clusters;
         c = next.fetch_add(1)) {
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        ClusterMembers cm;
        cm.embeddings = &input_embeddings;
        cm.rows = members[c];
        cm.texts.reserve(cm.rows.size());
        for (uint32_t r : cm.rows) cm.texts.push_back(input_texts[r]);
        summaries[c] = summarizer.summarize(level, c, cm, normalized, notes);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summaries;
}

}  // namespace hiermem
