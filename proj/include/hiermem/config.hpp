// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiermem/detail/binio.hpp"
#include "hiermem/error.hpp"
#include "hiermem/retrieval.hpp"

namespace hiermem {

// Environment variables carrying backend secrets. Tokens are deliberately not
// config keys so config files stay shareable.
inline constexpr const char* kEmbedTokenEnv = "HIERMEM_EMBED_TOKEN";
inline constexpr const char* kLlmTokenEnv = "HIERMEM_LLM_TOKEN";

struct CorpusConfig {
  std::string captions_path;
  std::string embeddings_path;
  bool normalize = true;
};

struct EmbedderConfig {
  std::string kind = "stub";  // stub | http
  uint32_t dim = 64;          // stub output dimension
  std::string url;            // http endpoint
  int timeout_ms = 10000;
  int retries = 2;
  int in_flight = 4;
};

struct SummarizerConfig {
  std::string backend = "medoid";  // medoid | centroid | llm_http
  std::string url;                 // llm_http endpoint
  std::string model = "default";
  int timeout_ms = 30000;
  int retries = 2;
  int in_flight = 4;
  uint32_t max_summary_words = 30;
  std::string cache_dir;
};

struct FinchConfig {
  bool weighted_centroids = false;
  bool final_merge = true;
  bool drop_root_if_singleton = false;
};

struct RetrievalDefaults {
  uint32_t frame_count = 100;   // F, frames per video the profile assumes
  uint32_t window_count = 10;   // W temporal anchors
  uint32_t top_k = 10;          // K per level
  std::string selection = "top_k";
  double threshold = 0.5;
  std::vector<uint32_t> level_mask;  // empty = all levels
  bool hierarchical_aggregation = true;
  std::string mode = "hierarchical";
  uint32_t time_bins = 100;     // b time tokens
};

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
};

struct Config {
  std::string profile = "youcook2";
  CorpusConfig corpus;
  EmbedderConfig embedder;
  SummarizerConfig summarizer;
  FinchConfig finch;
  RetrievalDefaults retrieval;
  ServiceConfig service;

  RetrievalConfig retrieval_config() const {
    RetrievalConfig rc;
    rc.top_k = retrieval.top_k;
    rc.selection = selection_mode_from_string(retrieval.selection);
    rc.threshold = retrieval.threshold;
    rc.level_mask = retrieval.level_mask;
    rc.hierarchical_aggregation = retrieval.hierarchical_aggregation;
    if (retrieval.mode == "hierarchical") {
      rc.mode = RetrievalMode::kHierarchical;
    } else if (retrieval.mode == "flat") {
      rc.mode = RetrievalMode::kFlat;
    } else {
      throw ConfigError("unknown retrieval mode \"" + retrieval.mode +
                        "\" (expected hierarchical or flat)");
    }
    return rc;
  }
};

// The two dataset profiles the engine ships with. Both assume 100 frames per
// video; they differ in anchor and selection counts.
inline void apply_profile(Config& config, const std::string& name) {
  if (name == "youcook2") {
    config.retrieval.frame_count = 100;
    config.retrieval.window_count = 10;
    config.retrieval.top_k = 10;
  } else if (name == "vitt") {
    config.retrieval.frame_count = 100;
    config.retrieval.window_count = 30;
    config.retrieval.top_k = 30;
  } else {
    throw ConfigError("unknown profile \"" + name +
                      "\" (expected youcook2 or vitt)");
  }
  config.profile = name;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown config key \"" + where + "." + it.key() +
                        "\"");
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out,
              const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key \"" + where + "." + key +
                      "\" has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json config_to_json(const Config& c) {
  return nlohmann::json{
      {"schema", "hiermem.config/1"},
      {"profile", c.profile},
      {"corpus",
       {{"captions_path", c.corpus.captions_path},
        {"embeddings_path", c.corpus.embeddings_path},
        {"normalize", c.corpus.normalize}}},
      {"embedder",
       {{"kind", c.embedder.kind},
        {"dim", c.embedder.dim},
        {"url", c.embedder.url},
        {"timeout_ms", c.embedder.timeout_ms},
        {"retries", c.embedder.retries},
        {"in_flight", c.embedder.in_flight}}},
      {"summarizer",
       {{"backend", c.summarizer.backend},
        {"url", c.summarizer.url},
        {"model", c.summarizer.model},
        {"timeout_ms", c.summarizer.timeout_ms},
        {"retries", c.summarizer.retries},
        {"in_flight", c.summarizer.in_flight},
        {"max_summary_words", c.summarizer.max_summary_words},
        {"cache_dir", c.summarizer.cache_dir}}},
      {"finch",
       {{"weighted_centroids", c.finch.weighted_centroids},
        {"final_merge", c.finch.final_merge},
        {"drop_root_if_singleton", c.finch.drop_root_if_singleton}}},
      {"retrieval",
       {{"frame_count", c.retrieval.frame_count},
        {"window_count", c.retrieval.window_count},
        {"top_k", c.retrieval.top_k},
        {"selection", c.retrieval.selection},
        {"threshold", c.retrieval.threshold},
        {"level_mask", c.retrieval.level_mask},
        {"hierarchical_aggregation", c.retrieval.hierarchical_aggregation},
        {"mode", c.retrieval.mode},
        {"time_bins", c.retrieval.time_bins}}},
      {"service",
       {{"bind", c.service.bind}, {"port", c.service.port}}}};
}

// Applies a JSON document on top of `config`. Unknown keys are errors so
// typos surface instead of silently keeping defaults; token-looking keys get
// a pointed message.
inline void apply_config_json(Config& config, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"schema", "profile", "corpus", "embedder",
                               "summarizer", "finch", "retrieval", "service"},
                              "config");
  if (j.contains("profile")) {
    apply_profile(config, j.at("profile").get<std::string>());
  }
  if (j.contains("corpus")) {
    const auto& s = j.at("corpus");
    detail::reject_unknown_keys(
        s, {"captions_path", "embeddings_path", "normalize"}, "corpus");
    detail::read_key(s, "captions_path", config.corpus.captions_path, "corpus");
    detail::read_key(s, "embeddings_path", config.corpus.embeddings_path,
                     "corpus");
    detail::read_key(s, "normalize", config.corpus.normalize, "corpus");
  }
  if (j.contains("embedder")) {
    const auto& s = j.at("embedder");
    if (s.contains("auth_token") || s.contains("token")) {
      throw ConfigError("auth tokens do not belong in config files; set " +
                        std::string(kEmbedTokenEnv) + " instead");
    }
    detail::reject_unknown_keys(
        s, {"kind", "dim", "url", "timeout_ms", "retries", "in_flight"},
        "embedder");
    detail::read_key(s, "kind", config.embedder.kind, "embedder");
    detail::read_key(s, "dim", config.embedder.dim, "embedder");
    detail::read_key(s, "url", config.embedder.url, "embedder");
    detail::read_key(s, "timeout_ms", config.embedder.timeout_ms, "embedder");
    detail::read_key(s, "retries", config.embedder.retries, "embedder");
    detail::read_key(s, "in_flight", config.embedder.in_flight, "embedder");
  }
  if (j.contains("summarizer")) {
    const auto& s = j.at("summarizer");
    if (s.contains("auth_token") || s.contains("token")) {
      throw ConfigError("auth tokens do not belong in config files; set " +
                        std::string(kLlmTokenEnv) + " instead");
    }
    detail::reject_unknown_keys(s,
                                {"backend", "url", "model", "timeout_ms",
                                 "retries", "in_flight", "max_summary_words",
                                 "cache_dir"},
                                "summarizer");
    detail::read_key(s, "backend", config.summarizer.backend, "summarizer");
    detail::read_key(s, "url", config.summarizer.url, "summarizer");
    detail::read_key(s, "model", config.summarizer.model, "summarizer");
    detail::read_key(s, "timeout_ms", config.summarizer.timeout_ms,
                     "summarizer");
    detail::read_key(s, "retries", config.summarizer.retries, "summarizer");
    detail::read_key(s, "in_flight", config.summarizer.in_flight,
                     "summarizer");
    detail::read_key(s, "max_summary_words",
                     config.summarizer.max_summary_words, "summarizer");
    detail::read_key(s, "cache_dir", config.summarizer.cache_dir, "summarizer");
  }
  if (j.contains("finch")) {
    const auto& s = j.at("finch");
    detail::reject_unknown_keys(
        s, {"weighted_centroids", "final_merge", "drop_root_if_singleton"},
        "finch");
    detail::read_key(s, "weighted_centroids", config.finch.weighted_centroids,
                     "finch");
    detail::read_key(s, "final_merge", config.finch.final_merge, "finch");
    detail::read_key(s, "drop_root_if_singleton",
                     config.finch.drop_root_if_singleton, "finch");
  }
  if (j.contains("retrieval")) {
    const auto& s = j.at("retrieval");
    detail::reject_unknown_keys(
        s,
        {"frame_count", "window_count", "top_k", "selection", "threshold",
         "level_mask", "hierarchical_aggregation", "mode", "time_bins"},
        "retrieval");
    detail::read_key(s, "frame_count", config.retrieval.frame_count,
                     "retrieval");
    detail::read_key(s, "window_count", config.retrieval.window_count,
                     "retrieval");
    detail::read_key(s, "top_k", config.retrieval.top_k, "retrieval");
    detail::read_key(s, "selection", config.retrieval.selection, "retrieval");
    detail::read_key(s, "threshold", config.retrieval.threshold, "retrieval");
    detail::read_key(s, "level_mask", config.retrieval.level_mask, "retrieval");
    detail::read_key(s, "hierarchical_aggregation",
                     config.retrieval.hierarchical_aggregation, "retrieval");
    detail::read_key(s, "mode", config.retrieval.mode, "retrieval");
    detail::read_key(s, "time_bins", config.retrieval.time_bins, "retrieval");
  }
  if (j.contains("service")) {
    const auto& s = j.at("service");
    detail::reject_unknown_keys(s, {"bind", "port"}, "service");
    detail::read_key(s, "bind", config.service.bind, "service");
    detail::read_key(s, "port", config.service.port, "service");
  }
}

inline Config load_config_file(const std::string& path) {
  Config config;
  const auto bytes = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": not valid JSON: " + e.what());
  }
  apply_config_json(config, j);
  return config;
}

inline void validate_config(const Config& c) {
  if (c.embedder.kind != "stub" && c.embedder.kind != "http") {
    throw ConfigError("unknown embedder kind \"" + c.embedder.kind + "\"");
  }
  if (c.embedder.kind == "stub" && c.embedder.dim == 0) {
    throw ConfigError("stub embedder dimension must be positive");
  }
  if (c.embedder.kind == "http" && c.embedder.url.empty()) {
    throw ConfigError("http embedder requires embedder.url");
  }
  if (c.summarizer.backend != "medoid" && c.summarizer.backend != "centroid" &&
      c.summarizer.backend != "llm_http") {
    throw ConfigError("unknown summarizer backend \"" + c.summarizer.backend +
                      "\"");
  }
  if (c.summarizer.backend == "llm_http" && c.summarizer.url.empty()) {
    throw ConfigError("llm_http summarizer requires summarizer.url");
  }
  if (c.summarizer.max_summary_words == 0) {
    throw ConfigError("max_summary_words must be positive");
  }
  if (c.retrieval.window_count < 1) {
    throw ConfigError("window_count must be at least 1");
  }
  if (c.retrieval.frame_count < c.retrieval.window_count) {
    throw ConfigError("frame_count must be at least window_count");
  }
  if (c.retrieval.time_bins < 1) {
    throw ConfigError("time_bins must be at least 1");
  }
  if (c.service.port < 1 || c.service.port > 65535) {
    throw ConfigError("service port out of range");
  }
  validate_retrieval_config(c.retrieval_config());
}

inline std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace hiermem
