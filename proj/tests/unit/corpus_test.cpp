// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>
#include <hiermem/hiermem.hpp>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace hiermem;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("vectors file round-trips bit-exactly") {
  fixtures::TempDir dir;
  VectorStore store(3);
  store.push_row(std::vector<float>{1.5f, -2.25f, 0.125f});
  store.push_row(std::vector<float>{0.0f, 1e-30f, 3.0f});

  const auto path = dir.file("v.hcm1");
  write_vectors_file(path, store);
  const auto back = read_vectors_file(path);

  REQUIRE(back.dim == 3);
  REQUIRE(back.size() == 2);
  REQUIRE(back.data == store.data);
}

TEST_CASE("vectors file rejects damage") {
  fixtures::TempDir dir;
  VectorStore store(2);
  store.push_row(std::vector<float>{1.0f, 2.0f});
  const auto path = dir.file("v.hcm1");
  write_vectors_file(path, store);

  SECTION("bad magic") {
    auto bytes = detail::read_file_bytes(path);
    bytes[0] = 'X';
    detail::write_file_bytes(path, bytes.data(), bytes.size());
    REQUIRE_THROWS_MATCHES(read_vectors_file(path), InputError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("bad magic")));
  }
  SECTION("truncated payload") {
    auto bytes = detail::read_file_bytes(path);
    bytes.pop_back();
    detail::write_file_bytes(path, bytes.data(), bytes.size());
    REQUIRE_THROWS_MATCHES(read_vectors_file(path), InputError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("size mismatch")));
  }
  SECTION("non-finite row") {
    VectorStore bad(2);
    bad.push_row(std::vector<float>{1.0f, std::nanf("")});
    write_vectors_file(path, bad);
    REQUIRE_THROWS_MATCHES(read_vectors_file(path), InputError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("non-finite value in row 0")));
  }
  SECTION("zero dimension header") {
    detail::ByteWriter w;
    w.put_bytes(kVectorsMagic, 4);
    w.put_u32(0);
    w.put_u32(0);
    detail::write_file_bytes(path, w.bytes().data(), w.size());
    REQUIRE_THROWS_AS(read_vectors_file(path), InputError);
  }
}

TEST_CASE("ingest zips captions with embedding rows in order") {
  fixtures::TempDir dir;
  const auto captions = dir.file("c.ldjson");
  const auto embeddings = dir.file("e.hcm1");
  write_text(captions,
             "{\"id\": \"a\", \"text\": \"stir the soup\"}\n"
             "\n"
             "   \n"
             "{\"id\": \"b\", \"text\": \"slice the bread\"}\n");
  VectorStore store(2);
  store.push_row(std::vector<float>{3.0f, 4.0f});
  store.push_row(std::vector<float>{5.0f, 12.0f});
  write_vectors_file(embeddings, store);

  SECTION("normalized") {
    const auto corpus = ingest(captions, embeddings, true);
    REQUIRE(corpus.size() == 2);
    REQUIRE(corpus.records[0].id == "a");
    REQUIRE(corpus.records[1].text == "slice the bread");
    REQUIRE(corpus.normalized);
    // 3-4-5 triangle: normalization is exact here.
    REQUIRE(corpus.embedding(0)[0] == 0.6f);
    REQUIRE(corpus.embedding(0)[1] == 0.8f);
    REQUIRE(std::abs(l2_norm(corpus.embedding(1)) - 1.0) < 1e-7);
  }
  SECTION("raw when normalize is off") {
    const auto corpus = ingest(captions, embeddings, false);
    REQUIRE_FALSE(corpus.normalized);
    REQUIRE(corpus.embedding(1)[1] == 12.0f);
  }
}

TEST_CASE("ingest reports the offending line") {
  fixtures::TempDir dir;
  const auto captions = dir.file("c.ldjson");
  const auto embeddings = dir.file("e.hcm1");
  VectorStore store(2);
  store.push_row(std::vector<float>{1.0f, 0.0f});
  write_vectors_file(embeddings, store);

  SECTION("missing captions file") {
    REQUIRE_THROWS_MATCHES(ingest(dir.file("absent.ldjson"), embeddings, true),
                           InputError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("absent.ldjson")));
  }
  SECTION("malformed JSON keeps its line number") {
    write_text(captions, "{\"id\": \"a\", \"text\": \"x\"}\n{oops\n");
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(ContainsSubstring(":2: malformed")));
  }
  SECTION("blank lines still count toward line numbers") {
    write_text(captions, "\n\n{\"id\": 3}\n");
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(ContainsSubstring(":3: expected")));
  }
  SECTION("empty id") {
    write_text(captions, "{\"id\": \"\", \"text\": \"x\"}\n");
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(ContainsSubstring("empty id")));
  }
  SECTION("whitespace-only text") {
    write_text(captions, "{\"id\": \"a\", \"text\": \"  \"}\n");
    REQUIRE_THROWS_MATCHES(ingest(captions, embeddings, true), InputError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("empty text for id \"a\"")));
  }
  SECTION("duplicate id") {
    write_text(captions,
               "{\"id\": \"a\", \"text\": \"x\"}\n"
               "{\"id\": \"a\", \"text\": \"y\"}\n");
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(
            ContainsSubstring(":2: duplicate id \"a\"")));
  }
  SECTION("count mismatch") {
    write_text(captions,
               "{\"id\": \"a\", \"text\": \"x\"}\n"
               "{\"id\": \"b\", \"text\": \"y\"}\n");
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(
            ContainsSubstring("2 captions vs 1 embedding rows")));
  }
  SECTION("zero-norm row cannot be normalized") {
    write_text(captions, "{\"id\": \"a\", \"text\": \"x\"}\n");
    VectorStore zero(2);
    zero.push_row(std::vector<float>{0.0f, 0.0f});
    write_vectors_file(embeddings, zero);
    REQUIRE_THROWS_MATCHES(
        ingest(captions, embeddings, true), InputError,
        Catch::Matchers::MessageMatches(ContainsSubstring("id \"a\"")));
    REQUIRE_NOTHROW(ingest(captions, embeddings, false));
  }
}

TEST_CASE("corpus hash tracks content") {
  auto corpus = fixtures::two_pairs_corpus();
  const auto base = corpus_hash(corpus);
  REQUIRE(base.size() == 16);

  auto tweaked_text = corpus;
  tweaked_text.records[2].text += "!";
  REQUIRE(corpus_hash(tweaked_text) != base);

  auto tweaked_id = corpus;
  tweaked_id.records[0].id = "other";
  REQUIRE(corpus_hash(tweaked_id) != base);

  auto tweaked_vec = corpus;
  tweaked_vec.vectors.row(1)[0] += 1e-6f;
  REQUIRE(corpus_hash(tweaked_vec) != base);

  auto denorm = corpus;
  denorm.normalized = false;
  REQUIRE(corpus_hash(denorm) != base);

  REQUIRE(corpus_hash(fixtures::two_pairs_corpus()) == base);
}

TEST_CASE("stub embedder matches the reference construction") {
  StubEmbedder embedder(8);
  REQUIRE(embedder.kind() == "stub");
  REQUIRE(embedder.dim() == 8);

  for (const char* text :
       {"abc", "chop the onions", "a", "Mix THE batter gently", "xy"}) {
    const auto got = embedder.embed(text);
    const auto want = oracle::stub_embed(text, 8);
    REQUIRE(got == want);
  }

  SECTION("unit norm and determinism") {
    const auto a = embedder.embed("whisk the eggs");
    const auto b = embedder.embed("whisk the eggs");
    REQUIRE(a == b);
    REQUIRE(std::abs(l2_norm(a) - 1.0) < 1e-6);
  }
  SECTION("case-insensitive") {
    REQUIRE(embedder.embed("Chop Onions") == embedder.embed("chop onions"));
  }
  SECTION("distinct texts usually differ") {
    REQUIRE(embedder.embed("chop the onions") !=
            embedder.embed("preheat the oven"));
  }
  SECTION("empty text rejected") {
    REQUIRE_THROWS_AS(embedder.embed(""), InputError);
  }
  SECTION("dimension 0 rejected") {
    REQUIRE_THROWS_AS(StubEmbedder(0), ConfigError);
  }
}

TEST_CASE("http embedder talks to its backend") {
  fixtures::TestServer mock;
  std::atomic<int> hits{0};
  std::atomic<int> fail_first{0};
  std::string seen_auth;
  std::string seen_text;
  mock.server().Post(
      "/embed", [&](const httplib::Request& req, httplib::Response& res) {
        hits.fetch_add(1);
        seen_auth = req.get_header_value("Authorization");
        auto j = nlohmann::json::parse(req.body);
        seen_text = j["texts"][0].get<std::string>();
        if (fail_first.fetch_sub(1) > 0) {
          res.status = 503;
          return;
        }
        res.set_content(
            nlohmann::json{{"vectors", {{0.6, 0.8, 0.0}}}}.dump(),
            "application/json");
      });
  const auto base = mock.start();

  HttpEmbedderConfig config;
  config.url = base + "/embed";
  config.dim = 3;
  config.retries = 2;
  config.timeout_ms = 2000;

  SECTION("success carries the text and auth token") {
    config.auth_token = "sekrit";
    HttpEmbedder embedder(config);
    const auto v = embedder.embed("stir the pot");
    REQUIRE(v == Vec{0.6f, 0.8f, 0.0f});
    REQUIRE(seen_text == "stir the pot");
    REQUIRE(seen_auth == "Bearer sekrit");
    REQUIRE(hits.load() == 1);
  }
  SECTION("no auth header without a token") {
    HttpEmbedder embedder(config);
    embedder.embed("x");
    REQUIRE(seen_auth.empty());
  }
  SECTION("retries transient failures") {
    fail_first = 2;
    HttpEmbedder embedder(config);
    REQUIRE(embedder.embed("x") == Vec{0.6f, 0.8f, 0.0f});
    REQUIRE(hits.load() == 3);
  }
  SECTION("gives up after retries are spent") {
    fail_first = 100;
    HttpEmbedder embedder(config);
    REQUIRE_THROWS_MATCHES(embedder.embed("x"), BackendError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("after 3 attempts")));
    REQUIRE(hits.load() == 3);
  }
  SECTION("dimension mismatch is not retried") {
    config.dim = 4;
    HttpEmbedder embedder(config);
    REQUIRE_THROWS_MATCHES(
        embedder.embed("x"), BackendError,
        Catch::Matchers::MessageMatches(
            ContainsSubstring("returned dimension 3, expected 4")));
    REQUIRE(hits.load() == 1);
  }
}
