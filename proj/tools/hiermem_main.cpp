// SPDX-License-Identifier: Apache-2.0
//
// hiermem: build, inspect, query, serve, and evaluate hierarchical compact
// memory banks. All machine output is line-delimited JSON; errors go to
// stderr as JSON with distinct exit codes per error class.

#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <hiermem/hiermem.hpp>

namespace {

using namespace hiermem;

constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitBackend = 4;
constexpr int kExitInternal = 5;

void print_error(const std::string& type, const std::string& message) {
  std::cerr << error_json(type, message).dump() << "\n";
}

std::vector<uint32_t> parse_level_mask(const std::string& spec,
                                       uint32_t num_levels) {
  if (spec.empty() || spec == "all") return {};
  if (spec == "low") return {1};
  if (spec == "high") return {num_levels};
  std::vector<uint32_t> mask;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      mask.push_back(uint32_t(v));
    } catch (const std::exception&) {
      throw ConfigError("bad level mask \"" + spec +
                        "\" (expected all, low, high, or comma-separated "
                        "level numbers)");
    }
  }
  if (mask.empty()) throw ConfigError("level mask is empty");
  return mask;
}

std::unique_ptr<Embedder> make_embedder(const Config& config, uint32_t dim) {
  if (config.embedder.kind == "stub") {
    return std::make_unique<StubEmbedder>(dim);
  }
  HttpEmbedderConfig hc;
  hc.url = config.embedder.url;
  hc.auth_token = env_or_empty(kEmbedTokenEnv);
  hc.timeout_ms = config.embedder.timeout_ms;
  hc.retries = config.embedder.retries;
  hc.in_flight = config.embedder.in_flight;
  hc.dim = dim;
  return std::make_unique<HttpEmbedder>(hc);
}

std::unique_ptr<Summarizer> make_summarizer(const Config& config,
                                            Embedder& embedder) {
  if (config.summarizer.backend == "medoid") {
    return std::make_unique<MedoidSummarizer>();
  }
  if (config.summarizer.backend == "centroid") {
    return std::make_unique<CentroidSummarizer>();
  }
  LlmConfig lc;
  lc.url = config.summarizer.url;
  lc.model = config.summarizer.model;
  lc.auth_token = env_or_empty(kLlmTokenEnv);
  lc.timeout_ms = config.summarizer.timeout_ms;
  lc.retries = config.summarizer.retries;
  lc.in_flight = config.summarizer.in_flight;
  lc.max_summary_words = config.summarizer.max_summary_words;
  lc.cache_dir = config.summarizer.cache_dir;
  return std::make_unique<LlmSummarizer>(lc, embedder);
}

int run_build(const Config& config, const std::string& output, bool flat,
              int workers, const std::string& built_at) {
  validate_config(config);
  if (config.corpus.captions_path.empty() ||
      config.corpus.embeddings_path.empty()) {
    throw ConfigError("build needs corpus.captions_path and "
                      "corpus.embeddings_path (flags --captions/--embeddings)");
  }
  if (output.empty()) throw ConfigError("build needs --output");

  const Corpus corpus =
      ingest(config.corpus.captions_path, config.corpus.embeddings_path,
             config.corpus.normalize);

  // Summary embeddings must live in the corpus space, so the embedder is
  // pinned to the corpus dimension regardless of configured dim.
  auto embedder = make_embedder(config, corpus.dim());
  auto summarizer = make_summarizer(config, *embedder);

  CompactionNotes notes;
  BuildBankOptions options;
  options.flat = flat;
  options.finch.weighted_centroids = config.finch.weighted_centroids;
  options.finch.final_merge = config.finch.final_merge;
  options.finch.drop_root_if_singleton = config.finch.drop_root_if_singleton;
  options.workers = workers;
  options.built_at = built_at;
  options.extra_provenance["config"] = config_to_json(config);
  options.extra_provenance["embedder"] = embedder->kind();
  if (config.summarizer.backend == "llm_http") {
    options.extra_provenance["summary_template"] =
        std::string(kSummaryTemplateId);
    options.extra_provenance["summary_model"] = config.summarizer.model;
  }

  const MemoryBank bank = build_bank(corpus, *summarizer, notes, options);
  save_bank(bank, output);

  nlohmann::json out = bank_stats(bank);
  out["schema"] = "hiermem.stats/1";
  out["bank_path"] = output;
  for (const auto& w : notes.warnings()) {
    out["warnings"].push_back(w);
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int run_inspect(const std::string& bank_path, uint32_t samples) {
  const MemoryBank bank = load_bank(bank_path);
  nlohmann::json out = bank_stats(bank);
  out["schema"] = "hiermem.stats/1";
  if (samples > 0) {
    nlohmann::json per_level = nlohmann::json::array();
    for (uint32_t l = 1; l <= bank.num_levels(); ++l) {
      nlohmann::json texts = nlohmann::json::array();
      const BankLevel& level = bank.level(l);
      for (uint32_t i = 0; i < level.size() && i < samples; ++i) {
        texts.push_back(level.texts[i]);
      }
      per_level.push_back({{"level", l}, {"sample_texts", texts}});
    }
    out["samples"] = per_level;
  }
  std::cout << out.dump() << "\n";
  return 0;
}

struct QueryFlags {
  std::string bank_path;
  std::string frames_path;
  std::string levels_spec;
  std::string features_out;
  uint32_t window_count = 0;
  uint32_t top_k = 0;
  std::string selection;
  double threshold = 0.0;
  bool no_agg = false;
  std::string mode;
  bool window_set = false, k_set = false, selection_set = false,
       threshold_set = false, levels_set = false, mode_set = false;
};

int run_query(const Config& config, const QueryFlags& flags) {
  const MemoryBank bank = load_bank(flags.bank_path);
  const VectorStore frames = read_vectors_file(flags.frames_path);

  RetrievalConfig rc = config.retrieval_config();
  uint32_t window_count = config.retrieval.window_count;
  if (flags.window_set) window_count = flags.window_count;
  if (flags.k_set) rc.top_k = flags.top_k;
  if (flags.selection_set) {
    rc.selection = selection_mode_from_string(flags.selection);
  }
  if (flags.threshold_set) rc.threshold = flags.threshold;
  if (flags.levels_set) {
    rc.level_mask = parse_level_mask(flags.levels_spec, bank.num_levels());
  }
  if (flags.no_agg) rc.hierarchical_aggregation = false;
  if (flags.mode_set) {
    if (flags.mode == "hierarchical") {
      rc.mode = RetrievalMode::kHierarchical;
    } else if (flags.mode == "flat") {
      rc.mode = RetrievalMode::kFlat;
    } else {
      throw ConfigError("unknown retrieval mode \"" + flags.mode + "\"");
    }
  }
  validate_retrieval_config(rc);

  const AnchorSet anchors = make_anchors(frames, window_count, bank.normalized);
  const RetrievalResult result = retrieve(bank, anchors, rc);

  for (uint32_t a = 0; a < result.per_anchor.size(); ++a) {
    nlohmann::json line = anchor_result_json(result.per_anchor[a], a);
    line["schema"] = "hiermem.retrieval/1";
    std::cout << line.dump() << "\n";
  }

  if (!flags.features_out.empty()) {
    VectorStore features(bank.dim);
    features.reserve_rows(result.per_anchor.size());
    for (const AnchorResult& r : result.per_anchor) {
      features.push_row(r.feature);
    }
    write_vectors_file(flags.features_out, features);
  }
  return 0;
}

int run_cluster(const Config& config) {
  if (config.corpus.captions_path.empty() ||
      config.corpus.embeddings_path.empty()) {
    throw ConfigError("cluster needs --captions and --embeddings");
  }
  const Corpus corpus =
      ingest(config.corpus.captions_path, config.corpus.embeddings_path,
             config.corpus.normalize);
  FinchOptions finch;
  finch.weighted_centroids = config.finch.weighted_centroids;
  finch.final_merge = config.finch.final_merge;
  finch.drop_root_if_singleton = config.finch.drop_root_if_singleton;
  const PartitionHierarchy hierarchy = build_hierarchy(corpus, finch);
  for (uint32_t l = 1; l <= hierarchy.depth(); ++l) {
    const PartitionLevel& level = hierarchy.level(l);
    std::cout << nlohmann::json{{"schema", "hiermem.partition/1"},
                                {"level", l},
                                {"num_clusters", level.num_clusters},
                                {"assignment", level.assignment}}
                     .dump()
              << "\n";
  }
  return 0;
}

int run_serve(const Config& config, const std::string& bank_path) {
  MemoryBank bank = load_bank(bank_path);
  BankService service(std::move(bank), config.retrieval);
  std::cout << nlohmann::json{{"schema", "hiermem.serve/1"},
                              {"bind", config.service.bind},
                              {"port", config.service.port}}
                   .dump()
            << "\n"
            << std::flush;
  if (!service.listen(config.service.bind, config.service.port)) {
    throw InputError("cannot bind " + config.service.bind + ":" +
                     std::to_string(config.service.port));
  }
  return 0;
}

int run_eval(const EvalConfig& eval_config, const std::string& output) {
  const EvalReport report = eval_synthetic(eval_config);
  const nlohmann::json j = eval_report_json(report);
  if (!output.empty()) {
    const std::string body = j.dump(2);
    detail::write_file_bytes(output, body.data(), body.size());
  }
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical compact memory engine"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string profile;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--profile", profile, "parameter profile (youcook2, vitt)");

  auto* build = app.add_subcommand("build", "build a memory bank");
  std::string captions, embeddings, output, summarizer_kind, built_at;
  std::string cache_dir, llm_url, llm_model;
  bool flat = false, no_normalize = false, weighted = false;
  bool no_final_merge = false, drop_singleton = false;
  int workers = 1;
  build->add_option("--captions", captions, "captions LDJSON file");
  build->add_option("--embeddings", embeddings, "embeddings HCM1 file");
  build->add_option("--output", output, "bank file to write");
  build->add_option("--summarizer", summarizer_kind,
                    "medoid, centroid, or llm_http");
  build->add_option("--llm-url", llm_url, "LLM endpoint for llm_http");
  build->add_option("--llm-model", llm_model, "LLM model name");
  build->add_option("--cache-dir", cache_dir, "LLM reply cache directory");
  build->add_option("--workers", workers, "parallel summary requests");
  build->add_option("--built-at", built_at,
                    "provenance timestamp override (for reproducible builds)");
  build->add_flag("--flat", flat, "store captions as a single flat level");
  build->add_flag("--no-normalize", no_normalize,
                  "keep embeddings unnormalized");
  build->add_flag("--weighted-centroids", weighted,
                  "size-weighted centroid means");
  build->add_flag("--no-final-merge", no_final_merge,
                  "stop before merging two clusters into one");
  build->add_flag("--drop-singleton-root", drop_singleton,
                  "drop a single-cluster top level");

  auto* inspect = app.add_subcommand("inspect", "print bank statistics");
  std::string inspect_bank;
  uint32_t samples = 0;
  inspect->add_option("--bank", inspect_bank, "bank file")->required();
  inspect->add_option("--samples", samples, "sample texts per level");

  auto* query = app.add_subcommand("query", "retrieve for frame features");
  QueryFlags qf;
  query->add_option("--bank", qf.bank_path, "bank file")->required();
  query->add_option("--frames", qf.frames_path, "frame features HCM1 file")
      ->required();
  auto* opt_w =
      query->add_option("--window-count", qf.window_count, "temporal anchors");
  auto* opt_k = query->add_option("--k", qf.top_k, "nodes kept per level");
  auto* opt_sel = query->add_option("--selection", qf.selection,
                                    "top_k, max, or threshold");
  auto* opt_thr =
      query->add_option("--threshold", qf.threshold, "cosine floor");
  auto* opt_lvl = query->add_option(
      "--levels", qf.levels_spec, "aggregated levels: all, low, high, or list");
  auto* opt_mode =
      query->add_option("--mode", qf.mode, "hierarchical or flat");
  query->add_flag("--no-agg", qf.no_agg, "skip cross-level aggregation");
  query->add_option("--output-features", qf.features_out,
                    "write anchor features as HCM1");

  auto* serve = app.add_subcommand("serve", "serve a bank over HTTP");
  std::string serve_bank, bind;
  int port = 0;
  serve->add_option("--bank", serve_bank, "bank file")->required();
  auto* opt_bind = serve->add_option("--bind", bind, "bind address");
  auto* opt_port = serve->add_option("--port", port, "bind port");

  auto* cluster = app.add_subcommand(
      "cluster", "debug: dump per-level cluster assignments");
  std::string cl_captions, cl_embeddings;
  bool cl_no_normalize = false, cl_weighted = false, cl_no_final_merge = false,
       cl_drop_singleton = false;
  cluster->add_option("--captions", cl_captions, "captions LDJSON file")
      ->required();
  cluster->add_option("--embeddings", cl_embeddings, "embeddings HCM1 file")
      ->required();
  cluster->add_flag("--no-normalize", cl_no_normalize,
                    "keep embeddings unnormalized");
  cluster->add_flag("--weighted-centroids", cl_weighted,
                    "size-weighted centroid means");
  cluster->add_flag("--no-final-merge", cl_no_final_merge,
                    "stop before merging two clusters into one");
  cluster->add_flag("--drop-singleton-root", cl_drop_singleton,
                    "drop a single-cluster top level");

  auto* eval = app.add_subcommand("eval", "synthetic evaluation harness");
  EvalConfig ec;
  std::string eval_output;
  eval->add_option("--seed", ec.seed, "generator seed");
  eval->add_option("--supers", ec.supers, "planted super-cluster count");
  eval->add_option("--clusters-per-super", ec.clusters_per_super,
                   "planted clusters per super");
  eval->add_option("--copies", ec.copies_per_cluster, "leaves per cluster");
  eval->add_option("--dim", ec.dim, "embedding dimension");
  eval->add_option("--queries", ec.queries, "probes per run");
  eval->add_option("--noise", ec.noise, "leaf noise scale");
  eval->add_option("--spread", ec.super_spread, "prototype spread in a super");
  eval->add_option("--k-grid", ec.k_grid, "K sweep values")->delimiter(',');
  eval->add_option("--default-k", ec.default_k, "K for max/threshold rows");
  eval->add_option("--eval-threshold", ec.threshold, "threshold rule cosine");
  eval->add_option("--output", eval_output, "write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("config", e.what());
    return kExitConfig;
  }

  try {
    Config config;
    if (!config_path.empty()) config = load_config_file(config_path);
    if (!profile.empty()) apply_profile(config, profile);

    if (*build) {
      if (!captions.empty()) config.corpus.captions_path = captions;
      if (!embeddings.empty()) config.corpus.embeddings_path = embeddings;
      if (no_normalize) config.corpus.normalize = false;
      if (!summarizer_kind.empty()) config.summarizer.backend = summarizer_kind;
      if (!llm_url.empty()) config.summarizer.url = llm_url;
      if (!llm_model.empty()) config.summarizer.model = llm_model;
      if (!cache_dir.empty()) config.summarizer.cache_dir = cache_dir;
      if (weighted) config.finch.weighted_centroids = true;
      if (no_final_merge) config.finch.final_merge = false;
      if (drop_singleton) config.finch.drop_root_if_singleton = true;
      return run_build(config, output, flat, workers, built_at);
    }
    if (*inspect) return run_inspect(inspect_bank, samples);
    if (*query) {
      qf.window_set = opt_w->count() > 0;
      qf.k_set = opt_k->count() > 0;
      qf.selection_set = opt_sel->count() > 0;
      qf.threshold_set = opt_thr->count() > 0;
      qf.levels_set = opt_lvl->count() > 0;
      qf.mode_set = opt_mode->count() > 0;
      return run_query(config, qf);
    }
    if (*serve) {
      if (opt_bind->count() > 0) config.service.bind = bind;
      if (opt_port->count() > 0) config.service.port = port;
      return run_serve(config, serve_bank);
    }
    if (*cluster) {
      config.corpus.captions_path = cl_captions;
      config.corpus.embeddings_path = cl_embeddings;
      if (cl_no_normalize) config.corpus.normalize = false;
      if (cl_weighted) config.finch.weighted_centroids = true;
      if (cl_no_final_merge) config.finch.final_merge = false;
      if (cl_drop_singleton) config.finch.drop_root_if_singleton = true;
      return run_cluster(config);
    }
    if (*eval) return run_eval(ec, eval_output);
    print_error("config", "no subcommand given");
    return kExitConfig;
  } catch (const InputError& e) {
    print_error("input", e.what());
    return kExitInput;
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return kExitConfig;
  } catch (const BackendError& e) {
    print_error("backend", e.what());
    return kExitBackend;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitInternal;
  }
}
