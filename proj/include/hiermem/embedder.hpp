// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hiermem/detail/hash.hpp"
#include "hiermem/detail/semaphore.hpp"
#include "hiermem/error.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

// Text-to-vector boundary. The engine never runs an encoder in-process; it
// either fabricates deterministic vectors (stub) or calls out over HTTP.
// Implementations must be safe to call from multiple threads.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string kind() const = 0;
  virtual uint32_t dim() const = 0;
  virtual Vec embed(std::string_view text) = 0;
};

// Deterministic embedder for tests and offline builds.
//
// Rule, exactly: lowercase the text bytewise (ASCII 'A'..'Z' only), take every
// consecutive 3-byte window of the result (the whole text as a single gram
// when shorter than 3 bytes), bucket each gram at FNV-1a64(gram) mod dim with
// weight +1, then L2-normalize the bucket counts.
class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(uint32_t dim) : dim_(dim) {
    if (dim == 0) throw ConfigError("stub embedder: dimension must be >= 1");
  }

  std::string kind() const override { return "stub"; }
  uint32_t dim() const override { return dim_; }

  Vec embed(std::string_view text) override {
    if (text.empty()) throw InputError("embed: empty text");
    std::string lower(text);
    for (char& c : lower) {
      c = char(std::tolower(static_cast<unsigned char>(c)));
    }
    Vec v(dim_, 0.0f);
    if (lower.size() < 3) {
      v[detail::fnv1a64(lower) % dim_] += 1.0f;
    } else {
      for (size_t i = 0; i + 3 <= lower.size(); ++i) {
        v[detail::fnv1a64(std::string_view(lower).substr(i, 3)) % dim_] += 1.0f;
      }
    }
    normalize(v, "stub embedding");
    return v;
  }

 private:
  uint32_t dim_;
};

struct HttpEmbedderConfig {
  std::string url;            // e.g. http://127.0.0.1:9100/embed
  std::string auth_token;     // sent as "Authorization: Bearer <token>" if set
  int timeout_ms = 10000;
  int retries = 2;            // retries after the first attempt
  int in_flight = 4;
  uint32_t dim = 0;           // expected dimension; 0 = accept the backend's
};

namespace detail {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /path, "/" if absent
};

inline ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("backend url must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// POSTs {"texts": [string]} and expects {"vectors": [[number]]}.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config)
      : config_(std::move(config)),
        url_(detail::split_url(config_.url)),
        gate_(config_.in_flight) {}

  std::string kind() const override { return "http"; }
  uint32_t dim() const override { return config_.dim; }

  Vec embed(std::string_view text) override {
    if (text.empty()) throw InputError("embed: empty text");
    detail::Semaphore::Guard guard(gate_);

    nlohmann::json body;
    body["texts"] = {std::string(text)};
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
        const auto& vecs = j.at("vectors");
        if (!vecs.is_array() || vecs.size() != 1) {
          throw InputError("expected exactly one vector");
        }
        Vec v = vecs[0].get<Vec>();
        if (config_.dim != 0 && v.size() != config_.dim) {
          throw BackendError("embedding backend returned dimension " +
                             std::to_string(v.size()) + ", expected " +
                             std::to_string(config_.dim));
        }
        if (!all_finite(v)) {
          throw BackendError("embedding backend returned non-finite values");
        }
        return v;
      } catch (const BackendError&) {
        throw;  // dimension mismatch is not retryable
      } catch (const std::exception& e) {
        last_error = std::string("bad response: ") + e.what();
        continue;
      }
    }
    throw BackendError("embedding backend " + config_.url + " failed after " +
                       std::to_string(attempts) + " attempts (" + last_error +
                       ")");
  }

 private:
  HttpEmbedderConfig config_;
  detail::ParsedUrl url_;
  detail::Semaphore gate_;
};

}  // namespace hiermem
