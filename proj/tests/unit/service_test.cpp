// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <thread>

#include <catch2/catch_amalgamated.hpp>
#include <hiermem/hiermem.hpp>

#include "support/fixtures.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace hiermem;

namespace {

// Serves one bank on an ephemeral port for the duration of a test.
class Harness {
 public:
  explicit Harness(MemoryBank bank, RetrievalDefaults defaults = {})
      : service_(std::move(bank), std::move(defaults)) {
    port_ = service_.server().bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.server().listen_after_bind(); });
    service_.server().wait_until_ready();
  }
  ~Harness() {
    service_.stop();
    thread_.join();
  }

  httplib::Result get(const std::string& path) {
    httplib::Client cli("127.0.0.1", port_);
    return cli.Get(path);
  }
  httplib::Result post(const nlohmann::json& body) {
    httplib::Client cli("127.0.0.1", port_);
    return cli.Post("/retrieve", body.dump(), "application/json");
  }
  httplib::Result post_raw(const std::string& body) {
    httplib::Client cli("127.0.0.1", port_);
    return cli.Post("/retrieve", body, "application/json");
  }

 private:
  BankService service_;
  std::thread thread_;
  int port_ = 0;
};

nlohmann::json rows_json(const VectorStore& store) {
  nlohmann::json rows = nlohmann::json::array();
  for (size_t i = 0; i < store.size(); ++i) {
    auto r = store.row(i);
    rows.push_back(std::vector<float>(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace

TEST_CASE("health and stats endpoints describe the loaded bank") {
  const auto bank = fixtures::build_medoid_bank(fixtures::two_pairs_corpus());
  const auto expected_stats = bank_stats(bank);
  Harness harness(bank);

  SECTION("health") {
    auto res = harness.get("/health");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);
    REQUIRE(j.at("schema") == "hiermem.health/1");
    REQUIRE(j.at("status") == "ok");
    REQUIRE(j.at("version") == std::string(kToolVersion));
    REQUIRE(j.at("provenance") == bank.provenance);
  }
  SECTION("stats") {
    auto res = harness.get("/stats");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);
    REQUIRE(j.at("schema") == "hiermem.stats/1");
    REQUIRE(j.at("compaction_ratio") == expected_stats.at("compaction_ratio"));
    REQUIRE(j.at("total_units") == 3);
    REQUIRE(j.at("leaf_count") == 4);
  }
}

TEST_CASE("service retrieval equals the in-process library call") {
  const auto bank = fixtures::hand_bank();
  RetrievalDefaults defaults;
  defaults.window_count = 2;
  Harness harness(bank, defaults);

  AnchorSet anchors;
  anchors.anchors = VectorStore(4);
  anchors.anchors.push_row(bank.level(1).embeddings.row(0));
  anchors.anchors.push_row(bank.level(1).embeddings.row(2));
  anchors.source_frame_count = 2;

  Config library_defaults;
  const auto rc = library_defaults.retrieval_config();

  SECTION("explicit anchors") {
    auto res = harness.post({{"anchors", rows_json(anchors.anchors)}});
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);
    REQUIRE(j.at("schema") == "hiermem.retrieval/1");

    const auto expected = retrieve(bank, anchors, rc);
    REQUIRE(j.at("comparisons") == expected.comparison_count);
    REQUIRE(j.at("anchors").size() == expected.per_anchor.size());
    for (uint32_t a = 0; a < expected.per_anchor.size(); ++a) {
      const auto want = anchor_result_json(expected.per_anchor[a], a);
      REQUIRE(j.at("anchors")[a] == want);  // includes the base64 feature
    }
  }
  SECTION("frames are pooled server-side with the default window count") {
    VectorStore frames(4);
    frames.push_row(bank.level(1).embeddings.row(0));
    frames.push_row(bank.level(1).embeddings.row(1));
    frames.push_row(bank.level(1).embeddings.row(2));
    frames.push_row(bank.level(1).embeddings.row(3));

    auto res = harness.post({{"frames", rows_json(frames)}});
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);

    const auto pooled = make_anchors(frames, 2, bank.normalized);
    const auto expected = retrieve(bank, pooled, rc);
    REQUIRE(j.at("anchors").size() == 2);
    for (uint32_t a = 0; a < 2; ++a) {
      REQUIRE(j.at("anchors")[a] ==
              anchor_result_json(expected.per_anchor[a], a));
    }
  }
  SECTION("window_count in the request overrides the default") {
    VectorStore frames(4);
    for (uint32_t i = 0; i < 4; ++i) {
      frames.push_row(bank.level(1).embeddings.row(i));
    }
    auto res = harness.post(
        {{"frames", rows_json(frames)}, {"window_count", 1}});
    REQUIRE(res->status == 200);
    REQUIRE(nlohmann::json::parse(res->body).at("anchors").size() == 1);
  }
  SECTION("config overrides change the traversal") {
    auto res = harness.post({{"anchors", rows_json(anchors.anchors)},
                             {"config", {{"selection", "max"}}}});
    REQUIRE(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);
    for (const auto& anchor : j.at("anchors")) {
      for (const auto& level : anchor.at("trace")) {
        REQUIRE(level.at("selected").size() == 1);
      }
    }
  }
  SECTION("responses are stateless") {
    const nlohmann::json req{{"anchors", rows_json(anchors.anchors)}};
    auto first = harness.post(req);
    auto second = harness.post(req);
    REQUIRE(first->status == 200);
    REQUIRE(second->status == 200);
    REQUIRE(first->body == second->body);
  }
}

TEST_CASE("service maps failures onto status codes") {
  const auto bank = fixtures::hand_bank();
  Harness harness(bank);
  const nlohmann::json anchor{{"anchors", {{1.0, 0.0, 0.0, 0.0}}}};

  SECTION("malformed JSON body is an input error") {
    auto res = harness.post_raw("{nope");
    REQUIRE(res->status == 400);
    const auto j = nlohmann::json::parse(res->body);
    REQUIRE(j.at("schema") == "hiermem.error/1");
    REQUIRE(j.at("type") == "input");
  }
  SECTION("anchors and frames are mutually exclusive") {
    auto res = harness.post({{"anchors", {{1.0, 0.0, 0.0, 0.0}}},
                             {"frames", {{1.0, 0.0, 0.0, 0.0}}}});
    REQUIRE(res->status == 400);
    REQUIRE_THAT(nlohmann::json::parse(res->body).at("message")
                     .get<std::string>(),
                 ContainsSubstring("exactly one"));
    REQUIRE(harness.post(nlohmann::json::object())->status == 400);
  }
  SECTION("row width must match the bank dimension") {
    auto res = harness.post({{"anchors", {{1.0, 0.0}}}});
    REQUIRE(res->status == 400);
    REQUIRE_THAT(nlohmann::json::parse(res->body).at("message")
                     .get<std::string>(),
                 ContainsSubstring("4 numbers"));
  }
  SECTION("rows must be numeric") {
    auto res = harness.post({{"anchors", {{"a", "b", "c", "d"}}}});
    REQUIRE(res->status == 400);
  }
  SECTION("unknown request keys are config errors") {
    auto res = harness.post({{"anchor", {{1.0, 0.0, 0.0, 0.0}}}});
    REQUIRE(res->status == 422);
    REQUIRE_THAT(nlohmann::json::parse(res->body).at("message")
                     .get<std::string>(),
                 ContainsSubstring("request.anchor"));
  }
  SECTION("bad overrides are config errors") {
    auto bad = anchor;
    bad["config"] = {{"top_k", 0}};
    REQUIRE(harness.post(bad)->status == 422);

    bad["config"] = {{"selection", "best"}};
    REQUIRE(harness.post(bad)->status == 422);

    bad["config"] = {{"mode", "tree"}};
    REQUIRE(harness.post(bad)->status == 422);

    bad["config"] = {{"k", 3}};
    auto res = harness.post(bad);
    REQUIRE(res->status == 422);
    REQUIRE_THAT(nlohmann::json::parse(res->body).at("message")
                     .get<std::string>(),
                 ContainsSubstring("config.k"));

    bad["config"] = {{"level_mask", {9}}};
    REQUIRE(harness.post(bad)->status == 422);
  }
  SECTION("valid overrides still succeed after failures") {
    auto res = harness.post(anchor);
    REQUIRE(res->status == 200);
  }
}

TEST_CASE("request override parsing stands alone") {
  RetrievalConfig base;
  SECTION("partial overrides keep the rest") {
    const auto rc = retrieval_config_from_json(
        {{"top_k", 3}, {"mode", "flat"}}, base);
    REQUIRE(rc.top_k == 3);
    REQUIRE(rc.mode == RetrievalMode::kFlat);
    REQUIRE(rc.selection == base.selection);
    REQUIRE(rc.threshold == base.threshold);
  }
  SECTION("level mask override") {
    const auto rc =
        retrieval_config_from_json({{"level_mask", {1, 2}}}, base);
    REQUIRE(rc.level_mask == std::vector<uint32_t>{1, 2});
  }
  SECTION("non-object config") {
    REQUIRE_THROWS_AS(retrieval_config_from_json(nlohmann::json::array(), base),
                      ConfigError);
  }
  SECTION("validation applies to the merged result") {
    REQUIRE_THROWS_AS(
        retrieval_config_from_json({{"threshold", 1.5},
                                    {"selection", "threshold"}},
                                   base),
        ConfigError);
  }
}
