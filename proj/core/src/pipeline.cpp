#include "fitrep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "fitrep/cluster_store.hpp"
#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::app {

using nlohmann::json;

namespace {

std::string to_hex(uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

corpus::ConceptSchema schema_from_json(const json& j) {
  corpus::ConceptSchema schema;
  if (!j.contains("dims") || !j["dims"].is_array()) {
    throw ConfigError("schema needs a dims array");
  }
  for (const auto& d : j["dims"]) {
    std::string kind = d.value("kind", std::string("textual"));
    if (kind != "textual" && kind != "numeric") {
      throw ConfigError("schema dim kind must be textual or numeric");
    }
    schema.dims.push_back({d.at("name").get<std::string>(),
                           kind == "numeric" ? corpus::DimKind::numeric : corpus::DimKind::textual});
  }
  schema.validate();
  return schema;
}

json schema_to_json(const corpus::ConceptSchema& schema) {
  json dims = json::array();
  for (const auto& d : schema.dims) {
    dims.push_back(
        {{"name", d.name}, {"kind", d.kind == corpus::DimKind::numeric ? "numeric" : "textual"}});
  }
  return {{"dims", dims}};
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    return from_json_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown_keys(j,
                      {"workdir", "paths", "schema", "extractor", "encoder", "reduce", "fusion",
                       "cluster", "generator", "threads"},
                      "top level");

  PipelineConfig cfg;
  try {
    if (j.contains("workdir")) cfg.workdir = j["workdir"].get<std::string>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown_keys(p, {"items", "pairs", "manifest"}, "paths");
      if (p.contains("items")) cfg.items_path = p["items"].get<std::string>();
      if (p.contains("pairs")) cfg.pairs_path = p["pairs"].get<std::string>();
      if (p.contains("manifest")) cfg.manifest_path = p["manifest"].get<std::string>();
    }
    if (j.contains("schema")) cfg.schema = schema_from_json(j["schema"]);
    cfg.generator.schema = cfg.schema;

    if (j.contains("extractor")) {
      const auto& e = j["extractor"];
      reject_unknown_keys(e,
                          {"mode", "endpoint", "model", "auth_env", "timeout_sec", "max_retries",
                           "backoff_initial_ms"},
                          "extractor");
      std::string mode = e.value("mode", std::string("mock"));
      if (mode != "mock" && mode != "remote") throw ConfigError("extractor mode must be mock or remote");
      cfg.extractor.mode = mode == "mock" ? chie::ExtractorMode::mock : chie::ExtractorMode::remote;
      cfg.extractor.endpoint = e.value("endpoint", std::string{});
      cfg.extractor.model = e.value("model", cfg.extractor.model);
      cfg.extractor.auth_env = e.value("auth_env", std::string{});
      cfg.extractor.timeout_sec = e.value("timeout_sec", cfg.extractor.timeout_sec);
      cfg.extractor.max_retries = e.value("max_retries", cfg.extractor.max_retries);
      cfg.extractor.backoff_initial_ms = e.value("backoff_initial_ms", cfg.extractor.backoff_initial_ms);
    }

    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      reject_unknown_keys(e,
                          {"mode", "dim", "seed", "endpoint", "model", "auth_env", "timeout_sec",
                           "max_retries", "backoff_initial_ms", "batch_size"},
                          "encoder");
      std::string mode = e.value("mode", std::string("mock"));
      if (mode != "mock" && mode != "remote") throw ConfigError("encoder mode must be mock or remote");
      cfg.encoder.mode = mode == "mock" ? encode::EncoderMode::mock : encode::EncoderMode::remote;
      cfg.encoder.dim = e.value("dim", cfg.encoder.dim);
      cfg.encoder.seed = e.value("seed", cfg.encoder.seed);
      cfg.encoder.endpoint = e.value("endpoint", std::string{});
      cfg.encoder.model = e.value("model", cfg.encoder.model);
      cfg.encoder.auth_env = e.value("auth_env", std::string{});
      cfg.encoder.timeout_sec = e.value("timeout_sec", cfg.encoder.timeout_sec);
      cfg.encoder.max_retries = e.value("max_retries", cfg.encoder.max_retries);
      cfg.encoder.backoff_initial_ms = e.value("backoff_initial_ms", cfg.encoder.backoff_initial_ms);
      cfg.encoder.batch_size = e.value("batch_size", cfg.encoder.batch_size);
    }

    if (j.contains("reduce")) {
      const auto& r = j["reduce"];
      reject_unknown_keys(r,
                          {"method", "n_neighbors", "min_dist", "n_epochs",
                           "negative_sample_rate", "learning_rate", "seed", "target_dim"},
                          "reduce");
      std::string method = r.value("method", std::string("umap"));
      if (method != "umap" && method != "pca") throw ConfigError("reduce method must be umap or pca");
      cfg.dr_method = method == "umap" ? spdr::Method::umap : spdr::Method::pca;
      cfg.umap.n_neighbors = r.value("n_neighbors", cfg.umap.n_neighbors);
      cfg.umap.min_dist = r.value("min_dist", cfg.umap.min_dist);
      cfg.umap.n_epochs = r.value("n_epochs", cfg.umap.n_epochs);
      cfg.umap.negative_sample_rate = r.value("negative_sample_rate", cfg.umap.negative_sample_rate);
      cfg.umap.learning_rate = r.value("learning_rate", cfg.umap.learning_rate);
      cfg.umap.seed = r.value("seed", cfg.umap.seed);
      if (r.contains("target_dim")) {
        const auto& t = r["target_dim"];
        reject_unknown_keys(t, {"mode", "fixed_dim", "evr_threshold", "min_dim", "max_dim"},
                            "reduce.target_dim");
        std::string tmode = t.value("mode", std::string("adaptive"));
        if (tmode != "adaptive" && tmode != "fixed") {
          throw ConfigError("target_dim mode must be adaptive or fixed");
        }
        cfg.umap.target_dim.mode = tmode == "fixed" ? spdr::TargetDimPolicy::Mode::fixed
                                                    : spdr::TargetDimPolicy::Mode::adaptive;
        cfg.umap.target_dim.fixed_dim = t.value("fixed_dim", cfg.umap.target_dim.fixed_dim);
        cfg.umap.target_dim.evr_threshold = t.value("evr_threshold", cfg.umap.target_dim.evr_threshold);
        cfg.umap.target_dim.min_dim = t.value("min_dim", cfg.umap.target_dim.min_dim);
        cfg.umap.target_dim.max_dim = t.value("max_dim", cfg.umap.target_dim.max_dim);
      }
    }

    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      reject_unknown_keys(f, {"weights", "alpha", "q_max"}, "fusion");
      if (f.contains("weights") && !f["weights"].is_string()) {
        cfg.raw_weights = f["weights"].get<std::vector<double>>();
      } else if (f.contains("weights") && f["weights"].get<std::string>() != "uniform") {
        throw ConfigError("fusion weights must be an array or \"uniform\"");
      }
      cfg.alpha = f.value("alpha", cfg.alpha);
      cfg.q_max = f.value("q_max", cfg.q_max);
    }

    if (j.contains("cluster")) {
      const auto& c = j["cluster"];
      reject_unknown_keys(c, {"tau", "calib_fraction", "split_seed", "strategy", "index"},
                          "cluster");
      cfg.tau = c.value("tau", cfg.tau);
      cfg.calib_fraction = c.value("calib_fraction", cfg.calib_fraction);
      cfg.split_seed = c.value("split_seed", cfg.split_seed);
      if (c.contains("strategy")) {
        cfg.strategy = fbc::parse_cluster_strategy(c["strategy"].get<std::string>());
      }
      if (c.contains("index")) {
        const auto& i = c["index"];
        reject_unknown_keys(i, {"kind", "nlist", "nprobe", "seed", "kmeans_iters"}, "cluster.index");
        cfg.index_kind = i.value("kind", cfg.index_kind);
        if (cfg.index_kind != "exact" && cfg.index_kind != "ivf") {
          throw ConfigError("index kind must be exact or ivf");
        }
        cfg.ivf.nlist = i.value("nlist", cfg.ivf.nlist);
        cfg.ivf.nprobe = i.value("nprobe", cfg.ivf.nprobe);
        cfg.ivf.seed = i.value("seed", cfg.ivf.seed);
        cfg.ivf.kmeans_iters = i.value("kmeans_iters", cfg.ivf.kmeans_iters);
      }
    }

    if (j.contains("generator")) {
      const auto& g = j["generator"];
      reject_unknown_keys(g,
                          {"n_groups", "items_per_group", "n_confounder_pairs", "paraphrase_rate",
                           "max_quantity", "min_tuple_distance", "confounder_dim", "seed"},
                          "generator");
      cfg.generator.n_groups = g.value("n_groups", cfg.generator.n_groups);
      cfg.generator.items_per_group = g.value("items_per_group", cfg.generator.items_per_group);
      cfg.generator.n_confounder_pairs =
          g.value("n_confounder_pairs", cfg.generator.n_confounder_pairs);
      cfg.generator.paraphrase_rate = g.value("paraphrase_rate", cfg.generator.paraphrase_rate);
      cfg.generator.max_quantity = g.value("max_quantity", cfg.generator.max_quantity);
      cfg.generator.min_tuple_distance =
          g.value("min_tuple_distance", cfg.generator.min_tuple_distance);
      cfg.generator.confounder_dim = g.value("confounder_dim", cfg.generator.confounder_dim);
      cfg.generator_seed = g.value("seed", cfg.generator_seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void PipelineConfig::validate() const {
  schema.validate();
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (tau < 0.0) throw ConfigError("tau must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("fusion alpha must be > 0");
  if (!(q_max >= 1.0)) throw ConfigError("q_max must be >= 1");
  if (index_kind != "exact" && index_kind != "ivf") {
    throw ConfigError("index kind must be exact or ivf");
  }
  if (!raw_weights.empty() && raw_weights.size() != schema.d()) {
    throw ConfigError("fusion weights must have one entry per schema dim");
  }
  umap.validate();
  extractor.validate();
  encoder.validate();
}

std::string PipelineConfig::canonical_json() const {
  json j;
  j["workdir"] = workdir.string();
  j["paths"] = {{"items", items_path.string()},
                {"pairs", pairs_path.string()},
                {"manifest", manifest_path.string()}};
  j["schema"] = schema_to_json(schema);
  j["extractor"] = {{"mode", extractor.mode == chie::ExtractorMode::mock ? "mock" : "remote"},
                    {"endpoint", extractor.endpoint},
                    {"model", extractor.model},
                    {"timeout_sec", extractor.timeout_sec},
                    {"max_retries", extractor.max_retries}};
  j["encoder"] = {{"mode", encoder.mode == encode::EncoderMode::mock ? "mock" : "remote"},
                  {"dim", encoder.dim},
                  {"seed", encoder.seed},
                  {"endpoint", encoder.endpoint},
                  {"model", encoder.model},
                  {"batch_size", encoder.batch_size}};
  j["reduce"] = {{"method", dr_method == spdr::Method::umap ? "umap" : "pca"},
                 {"n_neighbors", umap.n_neighbors},
                 {"min_dist", umap.min_dist},
                 {"n_epochs", umap.n_epochs},
                 {"negative_sample_rate", umap.negative_sample_rate},
                 {"learning_rate", umap.learning_rate},
                 {"seed", umap.seed},
                 {"target_dim",
                  {{"mode", umap.target_dim.mode == spdr::TargetDimPolicy::Mode::fixed ? "fixed"
                                                                                       : "adaptive"},
                   {"fixed_dim", umap.target_dim.fixed_dim},
                   {"evr_threshold", umap.target_dim.evr_threshold},
                   {"min_dim", umap.target_dim.min_dim},
                   {"max_dim", umap.target_dim.max_dim}}}};
  j["fusion"] = {{"weights", raw_weights}, {"alpha", alpha}, {"q_max", q_max}};
  j["cluster"] = {{"tau", tau},
                  {"calib_fraction", calib_fraction},
                  {"split_seed", split_seed},
                  {"strategy", fbc::cluster_strategy_name(strategy)},
                  {"index",
                   {{"kind", index_kind},
                    {"nlist", ivf.nlist},
                    {"nprobe", ivf.nprobe},
                    {"seed", ivf.seed},
                    {"kmeans_iters", ivf.kmeans_iters}}}};
  j["generator"] = {{"n_groups", generator.n_groups},
                    {"items_per_group", generator.items_per_group},
                    {"n_confounder_pairs", generator.n_confounder_pairs},
                    {"paraphrase_rate", generator.paraphrase_rate},
                    {"max_quantity", generator.max_quantity},
                    {"min_tuple_distance", generator.min_tuple_distance},
                    {"confounder_dim", generator.confounder_dim},
                    {"seed", generator_seed}};
  // threads is part of the fingerprint: layouts computed with more than one
  // thread are not bit-reproducible, so a thread change must rerun stages
  j["threads"] = threads;
  return j.dump();
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::extract: return "extract";
    case Stage::encode: return "encode";
    case Stage::reduce: return "reduce";
    case Stage::fuse: return "fuse";
    case Stage::cluster: return "cluster";
    case Stage::store: return "store";
  }
  return "?";
}

namespace {

struct StagePaths {
  std::filesystem::path concepts;
  std::filesystem::path quarantine;
  std::filesystem::path vectors_dir;
  std::filesystem::path embeddings_dir;
  std::filesystem::path model;
  std::filesystem::path fused;
  std::filesystem::path fused_ids;
  std::filesystem::path index;
  std::filesystem::path clusters;
  std::filesystem::path clusters_meta;
  std::filesystem::path store;
  std::filesystem::path stamps_dir;
  std::filesystem::path run_manifest;

  explicit StagePaths(const std::filesystem::path& workdir)
      : concepts(workdir / "concepts.jsonl"),
        quarantine(workdir / "quarantine.jsonl"),
        vectors_dir(workdir / "vectors"),
        embeddings_dir(workdir / "embeddings"),
        model(workdir / "spdr_model.bin"),
        fused(workdir / "fused.fvec"),
        fused_ids(workdir / "fused.ids"),
        index(workdir / "index.fbci"),
        clusters(workdir / "clusters.jsonl"),
        clusters_meta(workdir / "clusters_meta.json"),
        store(workdir / "cluster_store.bin"),
        stamps_dir(workdir / ".stamps"),
        run_manifest(workdir / "run_manifest.json") {}
};

double resolve_q_max(const PipelineConfig& cfg) {
  if (!cfg.manifest_path.empty() && std::filesystem::exists(cfg.manifest_path)) {
    return corpus::load_manifest(cfg.manifest_path).q_max;
  }
  return cfg.q_max;
}

std::vector<std::string> store_files(const std::filesystem::path& dir,
                                     const corpus::ConceptSchema& schema) {
  std::vector<std::string> files = {(dir / "rows.ids").string(), (dir / "dims.json").string()};
  for (const auto& name : schema.text_dim_names()) {
    files.push_back((dir / (name + ".fvec")).string());
  }
  return files;
}

struct StageContext {
  const PipelineConfig& cfg;
  StagePaths paths;
  double q_max;

  explicit StageContext(const PipelineConfig& c)
      : cfg(c), paths(c.workdir), q_max(resolve_q_max(c)) {}
};

std::string dr_method_name(const PipelineConfig& cfg) {
  return cfg.dr_method == spdr::Method::umap ? "umap" : "pca";
}

std::string stage_config_slice(const StageContext& ctx, Stage stage) {
  const PipelineConfig& cfg = ctx.cfg;
  json j;
  switch (stage) {
    case Stage::extract:
      j = {{"schema", schema_to_json(cfg.schema)},
           {"mode", cfg.extractor.mode == chie::ExtractorMode::mock ? "mock" : "remote"},
           {"endpoint", cfg.extractor.endpoint},
           {"model", cfg.extractor.model}};
      break;
    case Stage::encode:
      j = {{"mode", cfg.encoder.mode == encode::EncoderMode::mock ? "mock" : "remote"},
           {"dim", cfg.encoder.dim},
           {"seed", cfg.encoder.seed},
           {"endpoint", cfg.encoder.endpoint},
           {"model", cfg.encoder.model}};
      break;
    case Stage::reduce:
      j = {{"method", dr_method_name(cfg)},
           {"n_neighbors", cfg.umap.n_neighbors},
           {"min_dist", cfg.umap.min_dist},
           {"n_epochs", cfg.umap.n_epochs},
           {"negative_sample_rate", cfg.umap.negative_sample_rate},
           {"learning_rate", cfg.umap.learning_rate},
           {"seed", cfg.umap.seed},
           {"target_mode",
            cfg.umap.target_dim.mode == spdr::TargetDimPolicy::Mode::fixed ? "fixed" : "adaptive"},
           {"fixed_dim", cfg.umap.target_dim.fixed_dim},
           {"evr_threshold", cfg.umap.target_dim.evr_threshold}};
      break;
    case Stage::fuse:
      j = {{"weights", cfg.raw_weights}, {"alpha", cfg.alpha}, {"q_max", ctx.q_max}};
      break;
    case Stage::cluster:
      j = {{"tau", cfg.tau},
           {"calib_fraction", cfg.calib_fraction},
           {"split_seed", cfg.split_seed},
           {"strategy", fbc::cluster_strategy_name(cfg.strategy)},
           {"index_kind", cfg.index_kind},
           {"nlist", cfg.ivf.nlist},
           {"nprobe", cfg.ivf.nprobe},
           {"ivf_seed", cfg.ivf.seed},
           {"kmeans_iters", cfg.ivf.kmeans_iters}};
      break;
    case Stage::store:
      j = {{"format", "FCST-1"}};
      break;
  }
  return j.dump();
}

}  // namespace

namespace {

class PipelineRunner {
 public:
  PipelineRunner(const PipelineConfig& cfg, bool force) : ctx_(cfg), force_(force) {
    std::filesystem::create_directories(cfg.workdir);
    std::filesystem::create_directories(ctx_.paths.stamps_dir);
  }

  RunManifest run_all() {
    RunManifest manifest;
    manifest.config_fingerprint = to_hex(hash64(ctx_.cfg.canonical_json()));
    for (Stage stage : {Stage::extract, Stage::encode, Stage::reduce, Stage::fuse, Stage::cluster,
                        Stage::store}) {
      manifest.stages.push_back(run_stage(stage, /*allow_skip=*/!force_));
    }
    save_run_manifest(ctx_.paths.run_manifest, manifest);
    return manifest;
  }

  StageInfo run_one(Stage stage) { return run_stage(stage, /*allow_skip=*/false); }

 private:
  StageInfo run_stage(Stage stage, bool allow_skip) {
    StageInfo info;
    info.name = stage_name(stage);
    info.fingerprint = fingerprint_of(stage);
    info.outputs = outputs_of(stage);
    if (allow_skip && stamp_matches(stage, info.fingerprint) && outputs_exist(info.outputs)) {
      info.skipped = true;
      log_info("stage " + info.name + ": up to date, skipping");
      return info;
    }
    log_info("stage " + info.name + ": running");
    auto t0 = std::chrono::steady_clock::now();
    try {
      execute(stage);
    } catch (const ConfigError&) {
      throw;
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("stage " + info.name + ": " + e.what());
    }
    auto t1 = std::chrono::steady_clock::now();
    info.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (!outputs_exist(info.outputs)) {
      throw StageError("stage " + info.name + " did not produce its outputs");
    }
    write_stamp(stage, info);
    return info;
  }

  std::string fingerprint_of(Stage stage) {
    auto it = fingerprints_.find(stage);
    if (it != fingerprints_.end()) return it->second;
    std::string material = stage_config_slice(ctx_, stage);
    switch (stage) {
      case Stage::extract:
        material += "|items:" + to_hex(io::hash_file(ctx_.cfg.items_path));
        break;
      case Stage::encode:
        material += "|up:" + fingerprint_of(Stage::extract);
        break;
      case Stage::reduce:
        material += "|up:" + fingerprint_of(Stage::encode);
        break;
      case Stage::fuse:
        // Quantities come from the extract stage, embeddings from reduce.
        material += "|up:" + fingerprint_of(Stage::reduce);
        material += "|q:" + fingerprint_of(Stage::extract);
        break;
      case Stage::cluster:
        material += "|up:" + fingerprint_of(Stage::fuse);
        if (ctx_.cfg.tau <= 0.0) {
          if (ctx_.cfg.pairs_path.empty() || !std::filesystem::exists(ctx_.cfg.pairs_path)) {
            throw ConfigError("cluster stage needs a tau or a labeled pairs file");
          }
          material += "|pairs:" + to_hex(io::hash_file(ctx_.cfg.pairs_path));
        }
        break;
      case Stage::store:
        material += "|up:" + fingerprint_of(Stage::cluster);
        break;
    }
    std::string fp = to_hex(hash64(material));
    fingerprints_.emplace(stage, fp);
    return fp;
  }

  std::vector<std::string> outputs_of(Stage stage) const {
    const StagePaths& p = ctx_.paths;
    switch (stage) {
      case Stage::extract:
        return {p.concepts.string(), p.quarantine.string()};
      case Stage::encode:
        return store_files(p.vectors_dir, ctx_.cfg.schema);
      case Stage::reduce: {
        auto files = store_files(p.embeddings_dir, ctx_.cfg.schema);
        files.push_back(p.model.string());
        return files;
      }
      case Stage::fuse:
        return {p.fused.string(), p.fused_ids.string()};
      case Stage::cluster:
        return {p.index.string(), p.clusters.string(), p.clusters_meta.string()};
      case Stage::store:
        return {p.store.string()};
    }
    return {};
  }

  static bool outputs_exist(const std::vector<std::string>& outputs) {
    for (const auto& o : outputs) {
      if (!std::filesystem::exists(o)) return false;
    }
    return true;
  }

  std::filesystem::path stamp_path(Stage stage) const {
    return ctx_.paths.stamps_dir / (std::string(stage_name(stage)) + ".json");
  }

  bool stamp_matches(Stage stage, const std::string& fingerprint) const {
    auto path = stamp_path(stage);
    if (!std::filesystem::exists(path)) return false;
    try {
      json j = json::parse(io::read_file(path));
      return j.value("fingerprint", std::string{}) == fingerprint;
    } catch (const std::exception&) {
      return false;
    }
  }

  void write_stamp(Stage stage, const StageInfo& info) const {
    json j;
    j["fingerprint"] = info.fingerprint;
    j["outputs"] = info.outputs;
    j["elapsed_ms"] = info.elapsed_ms;
    io::atomic_write_file(stamp_path(stage), j.dump(2) + "\n");
  }

  void execute(Stage stage) {
    switch (stage) {
      case Stage::extract: return do_extract();
      case Stage::encode: return do_encode();
      case Stage::reduce: return do_reduce();
      case Stage::fuse: return do_fuse();
      case Stage::cluster: return do_cluster();
      case Stage::store: return do_store();
    }
  }

  void do_extract() {
    auto items = corpus::load_items(ctx_.cfg.items_path);
    chie::ExtractorConfig ex = ctx_.cfg.extractor;
    ex.schema = ctx_.cfg.schema;
    auto batch = chie::extract_batch(items, ex, ctx_.cfg.threads);
    if (batch.records.empty()) throw ValidationError("no items survived extraction");
    chie::save_concepts(ctx_.paths.concepts, batch.records);
    chie::save_quarantine(ctx_.paths.quarantine, batch.quarantined);
  }

  void do_encode() {
    auto records = chie::load_concepts(ctx_.paths.concepts, ctx_.cfg.schema);
    auto store = encode::encode_records(records, ctx_.cfg.schema, ctx_.cfg.encoder,
                                        ctx_.cfg.threads);
    store.save(ctx_.paths.vectors_dir);
  }

  void do_reduce() {
    auto enc = encode::VectorStore::load(ctx_.paths.vectors_dir);
    encode::VectorStore out;
    out.ids = enc.ids;
    out.dim_names = enc.dim_names;
    spdr::ModelSet models;
    models.dim_names = enc.dim_names;
    for (size_t k = 0; k < enc.dims.size(); ++k) {
      spdr::ModelEntry entry;
      entry.method = ctx_.cfg.dr_method;
      Matrix reduced;
      if (entry.method == spdr::Method::umap) {
        spdr::UmapParams p = ctx_.cfg.umap;
        p.n_threads = ctx_.cfg.threads;
        auto [emb, model] = spdr::fit_umap(enc.dims[k], p);
        reduced = std::move(emb);
        entry.umap = std::move(model);
      } else {
        int d = spdr::select_target_dim(enc.dims[k], ctx_.cfg.umap.target_dim);
        auto [emb, model] = spdr::fit_pca(enc.dims[k], d);
        reduced = std::move(emb);
        entry.pca = std::move(model);
      }
      out.dims.push_back(spdr::l2_normalize(reduced));
      models.models.push_back(std::move(entry));
      log_info("reduce: dim '" + enc.dim_names[k] + "' -> " +
               std::to_string(out.dims.back().cols()) + " components");
    }
    out.save(ctx_.paths.embeddings_dir);
    models.save(ctx_.paths.model);
  }

  void do_fuse() {
    auto emb = encode::VectorStore::load(ctx_.paths.embeddings_dir);
    auto records = chie::load_concepts(ctx_.paths.concepts, ctx_.cfg.schema);
    std::unordered_map<std::string, double> q_of;
    q_of.reserve(records.size());
    for (const auto& rec : records) q_of.emplace(rec.item_id, rec.quantity);
    std::vector<double> quantities;
    quantities.reserve(emb.ids.size());
    for (const auto& id : emb.ids) {
      auto it = q_of.find(id);
      if (it == q_of.end()) throw ValidationError("no quantity for item: " + id);
      quantities.push_back(it->second);
    }
    std::vector<double> raw = ctx_.cfg.raw_weights;
    if (raw.empty()) raw.assign(ctx_.cfg.schema.d(), 1.0);
    auto weights = fbc::normalize_weights(raw);
    fbc::QuantityMapParams qp{ctx_.cfg.alpha, ctx_.q_max};
    Matrix fused = fbc::fuse_all(emb, quantities, weights, qp, ctx_.cfg.threads);
    encode::write_fvec(ctx_.paths.fused, fused);
    encode::write_ids(ctx_.paths.fused_ids, emb.ids);
  }

  void do_cluster() {
    Matrix fused = encode::read_fvec(ctx_.paths.fused);
    auto ids = encode::read_ids(ctx_.paths.fused_ids);
    if (fused.rows() != ids.size()) throw ValidationError("fused rows do not match ids");

    double tau = ctx_.cfg.tau;
    if (tau <= 0.0) {
      auto pairs = corpus::load_labeled_pairs(ctx_.cfg.pairs_path);
      std::unordered_map<std::string, bool> known;
      for (const auto& id : ids) known.emplace(id, true);
      std::vector<corpus::LabeledPair> usable;
      for (const auto& p : pairs) {
        if (known.count(p.item_a) && known.count(p.item_b)) usable.push_back(p);
      }
      auto [calib, holdout] = eval_split(usable);
      if (calib.empty()) throw ValidationError("no usable labeled pairs for calibration");
      tau = fbc::calibrate_threshold(fused, ids, calib);
      log_info("calibrated tau = " + std::to_string(tau) + " on " +
               std::to_string(calib.size()) + " pairs");
    }

    std::unique_ptr<fbc::Index> index;
    if (ctx_.cfg.index_kind == "ivf") {
      index = fbc::build_ivf_index(std::move(fused), ctx_.cfg.ivf);
    } else {
      index = fbc::build_exact_index(std::move(fused));
    }
    index->save(ctx_.paths.index);

    std::vector<std::vector<int32_t>> neighborhoods(ids.size());
    const Matrix& vectors = index->vectors();
    parallel_for(ids.size(), ctx_.cfg.threads, [&](size_t i) {
      auto hits = index->range_search(vectors.row_span(i), tau);
      neighborhoods[i].reserve(hits.size());
      for (const auto& h : hits) neighborhoods[i].push_back(h.index);
      bool has_self = false;
      for (int32_t v : neighborhoods[i]) has_self = has_self || v == static_cast<int32_t>(i);
      if (!has_self) neighborhoods[i].push_back(static_cast<int32_t>(i));
    });
    auto assignment = fbc::cluster(neighborhoods, ids, ctx_.cfg.strategy);
    fbc::save_clusters(ctx_.paths.clusters, assignment);

    std::vector<double> raw = ctx_.cfg.raw_weights;
    if (raw.empty()) raw.assign(ctx_.cfg.schema.d(), 1.0);
    fbc::ClusterMeta meta;
    meta.n_items = assignment.item_ids.size();
    meta.n_clusters = assignment.n_clusters;
    meta.strategy = fbc::cluster_strategy_name(ctx_.cfg.strategy);
    meta.tau = tau;
    meta.weights = fbc::normalize_weights(raw).w;
    meta.alpha = ctx_.cfg.alpha;
    meta.q_max = ctx_.q_max;
    meta.index_kind = ctx_.cfg.index_kind;
    fbc::save_cluster_meta(ctx_.paths.clusters_meta, meta);
  }

  void do_store() {
    auto assignment = fbc::load_clusters(ctx_.paths.clusters);
    ClusterStore::build(ctx_.paths.store, assignment, fingerprint_of(Stage::cluster));
  }

  std::pair<std::vector<corpus::LabeledPair>, std::vector<corpus::LabeledPair>> eval_split(
      const std::vector<corpus::LabeledPair>& pairs) const {
    std::vector<corpus::LabeledPair> shuffled = pairs;
    Rng rng(ctx_.cfg.split_seed);
    rng.shuffle(shuffled);
    size_t n_calib = static_cast<size_t>(
        std::ceil(ctx_.cfg.calib_fraction * static_cast<double>(shuffled.size())));
    n_calib = std::min(n_calib, shuffled.size());
    return {std::vector<corpus::LabeledPair>(shuffled.begin(), shuffled.begin() + n_calib),
            std::vector<corpus::LabeledPair>(shuffled.begin() + n_calib, shuffled.end())};
  }

  StageContext ctx_;
  bool force_;
  std::map<Stage, std::string> fingerprints_;
};

}  // namespace

RunManifest run_pipeline(const PipelineConfig& cfg, bool force) {
  cfg.validate();
  PipelineRunner runner(cfg, force);
  return runner.run_all();
}

StageInfo run_single_stage(const PipelineConfig& cfg, Stage stage) {
  cfg.validate();
  PipelineRunner runner(cfg, /*force=*/true);
  return runner.run_one(stage);
}

RunManifest load_run_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const std::exception& e) {
    throw ValidationError("run manifest " + path.string() + ": " + e.what());
  }
  RunManifest m;
  m.config_fingerprint = j.value("config_fingerprint", std::string{});
  for (const auto& s : j.value("stages", json::array())) {
    StageInfo info;
    info.name = s.value("name", std::string{});
    info.skipped = s.value("skipped", false);
    info.fingerprint = s.value("fingerprint", std::string{});
    info.elapsed_ms = s.value("elapsed_ms", 0.0);
    if (s.contains("outputs")) info.outputs = s["outputs"].get<std::vector<std::string>>();
    m.stages.push_back(std::move(info));
  }
  return m;
}

void save_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  json stages = json::array();
  for (const auto& s : manifest.stages) {
    stages.push_back({{"name", s.name},
                      {"skipped", s.skipped},
                      {"fingerprint", s.fingerprint},
                      {"elapsed_ms", s.elapsed_ms},
                      {"outputs", s.outputs}});
  }
  json j;
  j["config_fingerprint"] = manifest.config_fingerprint;
  j["stages"] = stages;
  io::atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace fitrep::app
