// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <hiermem/hiermem.hpp>

#include "support/oracles.hpp"

namespace fixtures {

// Self-deleting scratch directory for file round-trip tests.
class TempDir {
 public:
  TempDir() {
    std::string templ =
        (std::filesystem::temp_directory_path() / "hiermem-test-XXXXXX")
            .string();
    if (!mkdtemp(templ.data())) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = templ;
  }
  ~TempDir() {
    if (path_.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  TempDir(TempDir&& other) noexcept : path_(std::move(other.path_)) {
    other.path_.clear();
  }

  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline hiermem::VectorStore to_store(const oracle::Matrix& m) {
  hiermem::VectorStore store(uint32_t(m.empty() ? 0 : m[0].size()));
  for (const auto& row : m) store.push_row(row);
  return store;
}

inline oracle::Matrix to_matrix(const hiermem::VectorStore& store) {
  oracle::Matrix m;
  m.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    auto r = store.row(i);
    m.emplace_back(r.begin(), r.end());
  }
  return m;
}

// 2D unit vectors at the given angles (degrees).
inline oracle::Matrix angle_vectors(const std::vector<double>& degrees) {
  oracle::Matrix m;
  for (double deg : degrees) {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    m.push_back({float(std::cos(rad)), float(std::sin(rad))});
  }
  return m;
}

inline hiermem::Corpus make_corpus(const oracle::Matrix& vectors,
                                   bool normalized = true,
                                   std::vector<std::string> texts = {}) {
  hiermem::Corpus corpus;
  corpus.normalized = normalized;
  corpus.vectors = to_store(vectors);
  for (size_t i = 0; i < vectors.size(); ++i) {
    hiermem::CaptionRecord rec;
    rec.id = "r" + std::to_string(i);
    rec.text = i < texts.size() ? texts[i] : "record " + std::to_string(i);
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

// Two tight pairs far apart: clusters {0,1} and {2,3}, then one root.
inline hiermem::Corpus two_pairs_corpus() {
  return make_corpus(angle_vectors({0.0, 2.0, 90.0, 92.0}), true,
                     {"chop the onions", "dice the onions", "preheat the oven",
                      "heat the oven"});
}

inline void write_captions_file(const std::string& path,
                                const hiermem::Corpus& corpus) {
  std::ofstream out(path);
  for (const auto& rec : corpus.records) {
    out << nlohmann::json{{"id", rec.id}, {"text", rec.text}}.dump() << "\n";
  }
}

// Writes captions + embeddings files; returns their paths.
inline std::pair<std::string, std::string> write_corpus_files(
    const TempDir& dir, const hiermem::Corpus& corpus,
    const std::string& stem = "corpus") {
  const std::string captions = dir.file(stem + ".ldjson");
  const std::string embeddings = dir.file(stem + ".hcm1");
  write_captions_file(captions, corpus);
  hiermem::write_vectors_file(embeddings, corpus.vectors);
  return {captions, embeddings};
}

inline hiermem::MemoryBank build_medoid_bank(
    const hiermem::Corpus& corpus,
    hiermem::PartitionHierarchy* capture = nullptr) {
  hiermem::MedoidSummarizer summarizer;
  hiermem::CompactionNotes notes;
  hiermem::BuildBankOptions options;
  options.built_at = "2000-01-01T00:00:00Z";
  options.capture_hierarchy = capture;
  return hiermem::build_bank(corpus, summarizer, notes, options);
}

// Hand-built two-level bank: two parents, each the renormalized mean of two
// orthogonal children (4D axes).
inline hiermem::MemoryBank hand_bank() {
  hiermem::MemoryBank bank;
  bank.dim = 4;
  bank.normalized = true;
  bank.leaf_count = 4;

  hiermem::BankLevel level1;
  level1.embeddings = to_store({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0},
                                {0, 0, 0, 1}});
  level1.texts = {"child 0", "child 1", "child 2", "child 3"};
  level1.parent = {0, 0, 1, 1};
  level1.leaf_span = {1, 1, 1, 1};

  const float h = float(1.0 / std::sqrt(2.0));
  hiermem::BankLevel level2;
  level2.embeddings = to_store({{h, h, 0, 0}, {0, 0, h, h}});
  level2.texts = {"parent 0", "parent 1"};
  level2.parent = {hiermem::kNoParent, hiermem::kNoParent};
  level2.leaf_span = {2, 2};

  bank.levels_by_index = {std::move(level1), std::move(level2)};
  bank.provenance = {{"schema", "hiermem.bank/1"}, {"summarizer", "hand"}};
  bank.rebuild_child_index();
  hiermem::validate_bank(bank);
  return bank;
}

// Mixture corpus: `clusters` random unit prototypes with `copies` noisy
// copies each. Gives FINCH real structure so banks get multiple levels.
inline hiermem::Corpus mixture_corpus(oracle::Rng& rng, uint32_t clusters,
                                      uint32_t copies, uint32_t dim,
                                      double noise = 0.08) {
  oracle::Matrix rows;
  for (uint32_t c = 0; c < clusters; ++c) {
    const auto proto = rng.unit_vector(dim);
    for (uint32_t i = 0; i < copies; ++i) {
      std::vector<float> v(dim);
      double s = 0.0;
      for (uint32_t d = 0; d < dim; ++d) {
        v[d] = float(double(proto[d]) + noise * rng.gaussian());
        s += double(v[d]) * double(v[d]);
      }
      s = std::sqrt(s);
      for (auto& x : v) x = float(double(x) / s);
      rows.push_back(std::move(v));
    }
  }
  return make_corpus(rows);
}

// In-process HTTP backend mock on an ephemeral port.
class TestServer {
 public:
  TestServer() : server_(std::make_unique<httplib::Server>()) {}
  ~TestServer() { stop(); }
  TestServer(const TestServer&) = delete;
  TestServer& operator=(const TestServer&) = delete;

  httplib::Server& server() { return *server_; }

  // Call after registering handlers; returns the base url.
  std::string start() {
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return "http://127.0.0.1:" + std::to_string(port_);
  }

  int port() const { return port_; }

  void stop() {
    if (thread_.joinable()) {
      server_->stop();
      thread_.join();
    }
  }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace fixtures
