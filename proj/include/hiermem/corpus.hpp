// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiermem/detail/binio.hpp"
#include "hiermem/detail/hash.hpp"
#include "hiermem/error.hpp"
#include "hiermem/vec.hpp"

namespace hiermem {

// Embedding file format "HCM1": magic (4 bytes) | u32 count | u32 dim |
// count*dim f32 row-major, all little-endian. Bit-exact round trips.
inline constexpr char kVectorsMagic[4] = {'H', 'C', 'M', '1'};

struct CaptionRecord {
  std::string id;
  std::string text;

  bool operator==(const CaptionRecord&) const = default;
};

// Immutable after ingest. Embeddings live in one flat store; records keep
// ingestion order, record i owns row i.
struct Corpus {
  std::vector<CaptionRecord> records;
  VectorStore vectors;
  bool normalized = false;

  uint32_t dim() const { return vectors.dim; }
  size_t size() const { return records.size(); }
  std::span<const float> embedding(size_t i) const { return vectors.row(i); }
};

inline VectorStore read_vectors_file(const std::string& path) {
  auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 12) throw InputError(path + ": not an HCM1 file (too short)");
  if (std::memcmp(bytes.data(), kVectorsMagic, 4) != 0) {
    throw InputError(path + ": bad magic, expected HCM1");
  }
  detail::ByteReader r(bytes.data() + 4, bytes.size() - 4, path);
  const uint32_t count = r.get_u32();
  const uint32_t dim = r.get_u32();
  if (dim == 0) throw InputError(path + ": dimension 0 in header");
  const size_t expect = 12 + sizeof(float) * size_t(count) * dim;
  if (bytes.size() != expect) {
    throw InputError(path + ": size mismatch vs header (count=" +
                     std::to_string(count) + ", dim=" + std::to_string(dim) +
                     ", expected " + std::to_string(expect) + " bytes, got " +
                     std::to_string(bytes.size()) + ")");
  }
  VectorStore store(dim);
  store.data.resize(size_t(count) * dim);
  if (!store.data.empty()) {
    std::memcpy(store.data.data(), bytes.data() + 12,
                store.data.size() * sizeof(float));
  }
  for (size_t i = 0; i < store.size(); ++i) {
    if (!all_finite(store.row(i))) {
      throw InputError(path + ": non-finite value in row " + std::to_string(i));
    }
  }
  return store;
}

inline void write_vectors_file(const std::string& path,
                               const VectorStore& store) {
  detail::ByteWriter w;
  w.put_bytes(kVectorsMagic, 4);
  w.put_u32(static_cast<uint32_t>(store.size()));
  w.put_u32(store.dim);
  w.put_bytes(store.data.data(), store.data.size() * sizeof(float));
  detail::write_file_bytes(path, w.bytes().data(), w.size());
}

namespace detail {

inline std::string trim_copy(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

// Reads a line-delimited JSON caption file ({"id","text"} per line) plus an
// HCM1 embedding file and zips them positionally. Whitespace-only lines are
// skipped; anything else that fails to parse is an error with its line number.
inline Corpus ingest(const std::string& captions_path,
                     const std::string& embeddings_path, bool normalize) {
  std::ifstream in(captions_path);
  if (!in) throw InputError("cannot open captions file: " + captions_path);

  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_copy(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(captions_path + ":" + std::to_string(line_no) +
                       ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
        !j["id"].is_string() || !j["text"].is_string()) {
      throw InputError(captions_path + ":" + std::to_string(line_no) +
                       ": expected {\"id\": string, \"text\": string}");
    }
    CaptionRecord rec{j["id"].get<std::string>(), j["text"].get<std::string>()};
    if (rec.id.empty()) {
      throw InputError(captions_path + ":" + std::to_string(line_no) +
                       ": empty id");
    }
    if (detail::trim_copy(rec.text).empty()) {
      throw InputError(captions_path + ":" + std::to_string(line_no) +
                       ": empty text for id \"" + rec.id + "\"");
    }
    if (!seen_ids.insert(rec.id).second) {
      throw InputError(captions_path + ":" + std::to_string(line_no) +
                       ": duplicate id \"" + rec.id + "\"");
    }
    corpus.records.push_back(std::move(rec));
  }

  corpus.vectors = read_vectors_file(embeddings_path);
  if (corpus.vectors.size() != corpus.records.size()) {
    throw InputError("caption/embedding count mismatch: " +
                     std::to_string(corpus.records.size()) + " captions vs " +
                     std::to_string(corpus.vectors.size()) + " embedding rows");
  }

  if (normalize) {
    for (size_t i = 0; i < corpus.vectors.size(); ++i) {
      hiermem::normalize(corpus.vectors.row(i),
                         "embedding row " + std::to_string(i) + " (id \"" +
                             corpus.records[i].id + "\")");
    }
    corpus.normalized = true;
  }
  return corpus;
}

// Stable content hash over ids, texts and raw embedding bytes.
inline std::string corpus_hash(const Corpus& corpus) {
  uint64_t h = detail::fnv1a64("hiermem.corpus/1");
  const char zero = '\0';
  for (const auto& rec : corpus.records) {
    h = detail::fnv1a64(rec.id, h);
    h = detail::fnv1a64(std::string_view(&zero, 1), h);
    h = detail::fnv1a64(rec.text, h);
    h = detail::fnv1a64(std::string_view(&zero, 1), h);
  }
  const uint32_t dim = corpus.dim();
  h = detail::fnv1a64_bytes(&dim, sizeof dim, h);
  const uint8_t norm = corpus.normalized ? 1 : 0;
  h = detail::fnv1a64_bytes(&norm, sizeof norm, h);
  h = detail::fnv1a64_bytes(corpus.vectors.data.data(),
                            corpus.vectors.data.size() * sizeof(float), h);
  return detail::hex64(h);
}

}  // namespace hiermem
