// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hiermem/config.hpp"
#include "hiermem/error.hpp"
#include "hiermem/membank.hpp"
#include "hiermem/retrieval.hpp"
#include "hiermem/version.hpp"

namespace hiermem {

inline nlohmann::json error_json(const std::string& type,
                                 const std::string& message) {
  return {{"schema", "hiermem.error/1"},
          {"type", type},
          {"message", message}};
}

// Per-request retrieval overrides on top of the service defaults. Strict
// keys: a typo is a config error, not a silently ignored field.
inline RetrievalConfig retrieval_config_from_json(const nlohmann::json& j,
                                                  RetrievalConfig base) {
  if (!j.is_object()) {
    throw ConfigError("\"config\" must be a JSON object");
  }
  detail::reject_unknown_keys(j,
                              {"top_k", "selection", "threshold", "level_mask",
                               "hierarchical_aggregation", "mode"},
                              "config");
  detail::read_key(j, "top_k", base.top_k, "config");
  if (j.contains("selection")) {
    base.selection =
        selection_mode_from_string(j.at("selection").get<std::string>());
  }
  detail::read_key(j, "threshold", base.threshold, "config");
  detail::read_key(j, "level_mask", base.level_mask, "config");
  detail::read_key(j, "hierarchical_aggregation",
                   base.hierarchical_aggregation, "config");
  if (j.contains("mode")) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "hierarchical") {
      base.mode = RetrievalMode::kHierarchical;
    } else if (mode == "flat") {
      base.mode = RetrievalMode::kFlat;
    } else {
      throw ConfigError("unknown retrieval mode \"" + mode + "\"");
    }
  }
  validate_retrieval_config(base);
  return base;
}

// Read-only HTTP front end for one loaded bank. Requests never mutate the
// bank, so identical requests produce identical responses and any number can
// run concurrently.
class BankService {
 public:
  BankService(MemoryBank bank, RetrievalDefaults defaults)
      : bank_(std::move(bank)), defaults_(std::move(defaults)) {
    wire_routes();
  }

  httplib::Server& server() { return server_; }

  // Blocks until stop(). Returns false when the address cannot be bound.
  bool listen(const std::string& bind, int port) {
    return server_.listen(bind, port);
  }
  void stop() { server_.stop(); }

 private:
  static void set_json(httplib::Response& res, int status,
                       const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void wire_routes() {
    server_.Get("/health", [this](const httplib::Request&,
                                  httplib::Response& res) {
      set_json(res, 200,
               {{"schema", "hiermem.health/1"},
                {"status", "ok"},
                {"version", std::string(kToolVersion)},
                {"provenance", bank_.provenance}});
    });

    server_.Get("/stats",
                [this](const httplib::Request&, httplib::Response& res) {
                  nlohmann::json j = bank_stats(bank_);
                  j["schema"] = "hiermem.stats/1";
                  set_json(res, 200, j);
                });

    server_.Post("/retrieve", [this](const httplib::Request& req,
                                     httplib::Response& res) {
      try {
        set_json(res, 200, handle_retrieve(req.body));
      } catch (const ConfigError& e) {
        set_json(res, 422, error_json("config", e.what()));
      } catch (const InputError& e) {
        set_json(res, 400, error_json("input", e.what()));
      } catch (const std::exception& e) {
        set_json(res, 500, error_json("internal", e.what()));
      }
    });
  }

  VectorStore parse_matrix(const nlohmann::json& rows,
                           const std::string& what) const {
    if (!rows.is_array() || rows.empty()) {
      throw InputError("\"" + what + "\" must be a non-empty array of rows");
    }
    VectorStore store(bank_.dim);
    store.reserve_rows(rows.size());
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != bank_.dim) {
        throw InputError("every \"" + what + "\" row must have " +
                         std::to_string(bank_.dim) + " numbers");
      }
      Vec v;
      v.reserve(bank_.dim);
      for (const auto& x : row) {
        if (!x.is_number()) {
          throw InputError("\"" + what + "\" rows must contain numbers only");
        }
        v.push_back(float(x.get<double>()));
      }
      if (!all_finite(v)) {
        throw InputError("\"" + what + "\" rows must be finite");
      }
      store.push_row(v);
    }
    return store;
  }

  nlohmann::json handle_retrieve(const std::string& body) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("request body is not valid JSON: ") +
                       e.what());
    }
    if (!j.is_object()) throw InputError("request body must be a JSON object");
    detail::reject_unknown_keys(
        j, {"anchors", "frames", "window_count", "config"}, "request");

    RetrievalConfig rc = defaults_to_config();
    if (j.contains("config")) {
      rc = retrieval_config_from_json(j.at("config"), rc);
    }

    AnchorSet anchors;
    if (j.contains("anchors") == j.contains("frames")) {
      throw InputError(
          "request must carry exactly one of \"anchors\" or \"frames\"");
    }
    if (j.contains("anchors")) {
      anchors.anchors = parse_matrix(j.at("anchors"), "anchors");
      anchors.source_frame_count = uint32_t(anchors.anchors.size());
    } else {
      const VectorStore frames = parse_matrix(j.at("frames"), "frames");
      uint32_t w = defaults_.window_count;
      detail::read_key(j, "window_count", w, "request");
      anchors = make_anchors(frames, w, bank_.normalized);
    }

    const RetrievalResult result = retrieve(bank_, anchors, rc);
    nlohmann::json out;
    out["schema"] = "hiermem.retrieval/1";
    out["comparisons"] = result.comparison_count;
    nlohmann::json arr = nlohmann::json::array();
    for (uint32_t a = 0; a < result.per_anchor.size(); ++a) {
      arr.push_back(anchor_result_json(result.per_anchor[a], a));
    }
    out["anchors"] = std::move(arr);
    return out;
  }

  RetrievalConfig defaults_to_config() const {
    RetrievalConfig rc;
    rc.top_k = defaults_.top_k;
    rc.selection = selection_mode_from_string(defaults_.selection);
    rc.threshold = defaults_.threshold;
    rc.level_mask = defaults_.level_mask;
    rc.hierarchical_aggregation = defaults_.hierarchical_aggregation;
    rc.mode = defaults_.mode == "flat" ? RetrievalMode::kFlat
                                       : RetrievalMode::kHierarchical;
    return rc;
  }

  MemoryBank bank_;
  RetrievalDefaults defaults_;
  httplib::Server server_;
};

}  // namespace hiermem
