#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fitrep/cluster_store.hpp"
#include "fitrep/corpus.hpp"
#include "fitrep/encode.hpp"
#include "fitrep/errors.hpp"
#include "fitrep/evalkit.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/pipeline.hpp"
#include "fitrep/serve.hpp"

namespace fs = std::filesystem;
using namespace fitrep;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::string log_level = "info";
};

app::PipelineConfig load_config(const GlobalOpts& g) {
  app::PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = app::PipelineConfig::from_json_file(g.config_path);
  if (g.seed) {
    cfg.generator_seed = *g.seed;
    cfg.encoder.seed = *g.seed;
    cfg.umap.seed = *g.seed;
    cfg.ivf.seed = *g.seed;
    cfg.split_seed = *g.seed;
  }
  if (g.threads) cfg.threads = *g.threads;
  return cfg;
}

double resolve_q_max(const app::PipelineConfig& cfg) {
  if (!cfg.manifest_path.empty() && fs::exists(cfg.manifest_path)) {
    return corpus::load_manifest(cfg.manifest_path).q_max;
  }
  return cfg.q_max;
}

eval::ExperimentConfig to_experiment(const app::PipelineConfig& cfg) {
  eval::ExperimentConfig e;
  e.schema = cfg.schema;
  e.extractor = cfg.extractor;
  e.extractor.schema = cfg.schema;
  e.encoder = cfg.encoder;
  e.umap = cfg.umap;
  e.dr_method = cfg.dr_method;
  e.raw_weights = cfg.raw_weights;
  e.quantity = {cfg.alpha, resolve_q_max(cfg)};
  e.strategy = cfg.strategy;
  e.calib_fraction = cfg.calib_fraction;
  e.split_seed = cfg.split_seed;
  e.threads = cfg.threads;
  return e;
}

void print_stage(const app::StageInfo& info) {
  if (info.skipped) {
    std::cout << info.name << ": up to date\n";
  } else {
    std::cout << info.name << ": done (" << static_cast<long>(info.elapsed_ms) << " ms)\n";
  }
}

// Loads the store when present; otherwise serves 503s until one is built.
app::ClusterService make_service(const fs::path& store_path, bool explicit_path) {
  if (fs::exists(store_path)) return app::ClusterService(store_path);
  if (explicit_path) throw ValidationError("cluster store not found: " + store_path.string());
  log_warn("no cluster store at " + store_path.string() + ", serving empty");
  return app::ClusterService();
}

std::vector<std::string> read_id_lines(std::istream& in) {
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli("attention-guided item representation pipeline");
  cli.require_subcommand(1);
  cli.set_version_flag("--version", "fitrep 0.1.0");

  GlobalOpts g;
  cli.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  cli.add_option("--seed", g.seed, "override every seed in the config");
  cli.add_option("--threads", g.threads, "worker threads for parallel stages")
      ->check(CLI::PositiveNumber);
  cli.add_option("--log-level", g.log_level, "debug|info|warn|error");

  // generate
  auto* gen = cli.add_subcommand("generate", "write a synthetic labeled corpus");
  std::string gen_items, gen_pairs, gen_manifest;
  std::optional<size_t> gen_groups, gen_per_group, gen_confounders;
  gen->add_option("--items", gen_items, "items output path");
  gen->add_option("--pairs", gen_pairs, "labeled pairs output path");
  gen->add_option("--manifest", gen_manifest, "corpus manifest output path");
  gen->add_option("--groups", gen_groups, "planted duplicate groups");
  gen->add_option("--per-group", gen_per_group, "items per group");
  gen->add_option("--confounders", gen_confounders, "confounder pairs");

  // stage commands share the config workdir
  auto* extract = cli.add_subcommand("extract", "items -> concept records");
  auto* encode_cmd = cli.add_subcommand("encode", "concept records -> per-dimension vectors");
  auto* reduce = cli.add_subcommand("reduce", "vectors -> low-dimensional unit embeddings");
  auto* fuse = cli.add_subcommand("fuse", "embeddings + quantities -> fused vectors");
  auto* cluster_cmd = cli.add_subcommand("cluster", "fused vectors -> cluster assignments");

  auto* calibrate = cli.add_subcommand("calibrate", "pick tau from labeled pairs");
  bool calib_split_only = false;
  calibrate->add_flag("--split", calib_split_only,
                      "calibrate on the calibration split instead of all pairs");

  auto* eval_cmd = cli.add_subcommand("eval", "pipeline vs flat baseline on labeled pairs");
  auto* compare = cli.add_subcommand("compare-dr", "umap vs pca under the same pipeline");
  std::string report_dir;
  eval_cmd->add_option("--out", report_dir, "report directory (default workdir/eval)");
  std::string compare_dir;
  compare->add_option("--out", compare_dir, "report directory (default workdir/compare_dr)");

  auto* pipeline = cli.add_subcommand("pipeline", "run all stages with resume");
  bool force = false;
  pipeline->add_flag("--force", force, "rerun every stage even when up to date");

  auto* lookup = cli.add_subcommand("lookup", "cluster id of one item");
  std::string lookup_id, store_override;
  lookup->add_option("id", lookup_id, "item id")->required();
  lookup->add_option("--store", store_override, "cluster store path");

  auto* dedup = cli.add_subcommand("dedup", "drop lower-ranked duplicates from an id list");
  std::vector<std::string> dedup_ids;
  std::string dedup_input, dedup_store;
  dedup->add_option("ids", dedup_ids, "ranked item ids, best first");
  dedup->add_option("--input", dedup_input, "file with one id per line, - for stdin");
  dedup->add_option("--store", dedup_store, "cluster store path");

  auto* serve = cli.add_subcommand("serve", "read-only HTTP lookup endpoint");
  std::string host = "127.0.0.1", serve_store;
  int port = 8080;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port");
  serve->add_option("--store", serve_store, "cluster store path");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }

  try {
    set_log_level(parse_log_level(g.log_level));
    app::PipelineConfig cfg = load_config(g);

    if (*gen) {
      if (gen_groups) cfg.generator.n_groups = *gen_groups;
      if (gen_per_group) cfg.generator.items_per_group = *gen_per_group;
      if (gen_confounders) cfg.generator.n_confounder_pairs = *gen_confounders;
      fs::path items_path = !gen_items.empty() ? fs::path(gen_items) : cfg.items_path;
      fs::path pairs_path = !gen_pairs.empty()
                                ? fs::path(gen_pairs)
                                : (!cfg.pairs_path.empty() ? cfg.pairs_path : fs::path("pairs.jsonl"));
      fs::path manifest_path = !gen_manifest.empty()
                                   ? fs::path(gen_manifest)
                                   : (!cfg.manifest_path.empty() ? cfg.manifest_path
                                                                 : fs::path("manifest.json"));
      auto [items, truth] = corpus::generate_synthetic_corpus(cfg.generator, cfg.generator_seed);
      corpus::save_items(items_path, items);
      corpus::save_labeled_pairs(pairs_path, truth.pairs);
      corpus::CorpusManifest manifest;
      manifest.schema = cfg.generator.schema;
      manifest.q_max = static_cast<double>(cfg.generator.max_quantity);
      manifest.seed = cfg.generator_seed;
      manifest.n_groups = cfg.generator.n_groups;
      manifest.items_per_group = cfg.generator.items_per_group;
      manifest.n_confounder_pairs = cfg.generator.n_confounder_pairs;
      corpus::save_manifest(manifest_path, manifest);
      std::cout << "wrote " << items.size() << " items, " << truth.pairs.size()
                << " labeled pairs\n";
      return 0;
    }

    if (*extract) { print_stage(app::run_single_stage(cfg, app::Stage::extract)); return 0; }
    if (*encode_cmd) { print_stage(app::run_single_stage(cfg, app::Stage::encode)); return 0; }
    if (*reduce) { print_stage(app::run_single_stage(cfg, app::Stage::reduce)); return 0; }
    if (*fuse) { print_stage(app::run_single_stage(cfg, app::Stage::fuse)); return 0; }
    if (*cluster_cmd) { print_stage(app::run_single_stage(cfg, app::Stage::cluster)); return 0; }

    if (*calibrate) {
      Matrix fused = encode::read_fvec(cfg.workdir / "fused.fvec");
      auto ids = encode::read_ids(cfg.workdir / "fused.ids");
      if (cfg.pairs_path.empty()) throw ConfigError("calibrate needs paths.pairs in the config");
      auto pairs = corpus::load_labeled_pairs(cfg.pairs_path);
      std::vector<corpus::LabeledPair> use(pairs.begin(), pairs.end());
      if (calib_split_only) {
        use = eval::split_pairs(pairs, cfg.calib_fraction, cfg.split_seed).first;
      }
      double tau = fbc::calibrate_threshold(fused, ids, use);
      std::cout << "{\"tau\": " << tau << ", \"pairs\": " << use.size() << "}\n";
      return 0;
    }

    if (*eval_cmd || *compare) {
      auto items = corpus::load_items(cfg.items_path);
      if (cfg.pairs_path.empty()) throw ConfigError("eval needs paths.pairs in the config");
      auto pairs = corpus::load_labeled_pairs(cfg.pairs_path);
      eval::ExperimentConfig exp = to_experiment(cfg);
      eval::ComparisonReport report;
      fs::path out_dir;
      if (*eval_cmd) {
        report = eval::run_head_to_head(items, pairs, exp);
        out_dir = report_dir.empty() ? cfg.workdir / "eval" : fs::path(report_dir);
      } else {
        spdr::Method methods[] = {spdr::Method::umap, spdr::Method::pca};
        report = eval::compare_dr_methods(items, pairs, exp, methods);
        out_dir = compare_dir.empty() ? cfg.workdir / "compare_dr" : fs::path(compare_dir);
      }
      fs::create_directories(out_dir);
      eval::save_comparison_report(out_dir / "report.json", out_dir / "report.txt", report);
      std::cout << io::read_file(out_dir / "report.txt");
      std::cout << "reports in " << out_dir.string() << "\n";
      return 0;
    }

    if (*pipeline) {
      app::RunManifest manifest = app::run_pipeline(cfg, force);
      for (const auto& s : manifest.stages) print_stage(s);
      std::cout << "run manifest: " << (cfg.workdir / "run_manifest.json").string() << "\n";
      return 0;
    }

    if (*lookup) {
      fs::path store_path = store_override.empty() ? cfg.workdir / "cluster_store.bin"
                                                   : fs::path(store_override);
      auto store = app::ClusterStore::open(store_path);
      auto cid = store.lookup(lookup_id);
      if (cid) {
        std::cout << "{\"item_id\": \"" << lookup_id << "\", \"cluster_id\": " << *cid << "}\n";
      } else {
        std::cout << "{\"item_id\": \"" << lookup_id << "\", \"cluster_id\": null}\n";
      }
      return 0;
    }

    if (*dedup) {
      fs::path store_path = dedup_store.empty() ? cfg.workdir / "cluster_store.bin"
                                                : fs::path(dedup_store);
      auto store = app::ClusterStore::open(store_path);
      std::vector<std::string> ranked = dedup_ids;
      if (ranked.empty() && !dedup_input.empty()) {
        if (dedup_input == "-") {
          ranked = read_id_lines(std::cin);
        } else {
          std::ifstream in(dedup_input);
          if (!in) throw ValidationError("cannot read " + dedup_input);
          ranked = read_id_lines(in);
        }
      }
      for (const auto& id : app::dedup_ranked_list(ranked, store)) std::cout << id << "\n";
      return 0;
    }

    if (*serve) {
      fs::path store_path = serve_store.empty() ? cfg.workdir / "cluster_store.bin"
                                                : fs::path(serve_store);
      app::ClusterService service = make_service(store_path, !serve_store.empty());
      if (!service.listen(host, port)) {
        throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const StageError& e) {
    log_error(e.what());
    return 3;
  } catch (const ExtractionFailed& e) {
    log_error(e.what());
    return 3;
  } catch (const EncodeFailed& e) {
    log_error(e.what());
    return 3;
  } catch (const ValidationError& e) {
    log_error(e.what());
    return 4;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 0;
}
