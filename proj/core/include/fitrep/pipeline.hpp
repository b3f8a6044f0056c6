#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fitrep/chie.hpp"
#include "fitrep/corpus.hpp"
#include "fitrep/encode.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/spdr.hpp"

namespace fitrep::app {

// Everything a pipeline run needs, loadable from one JSON file. Paths are
// resolved relative to the process working directory; stage artifacts land
// under workdir.
struct PipelineConfig {
  std::filesystem::path workdir = "out";
  std::filesystem::path items_path = "items.jsonl";
  std::filesystem::path pairs_path;     // optional, needed when calibrating
  std::filesystem::path manifest_path;  // optional, supplies q_max

  corpus::ConceptSchema schema = corpus::ConceptSchema::default_schema();
  chie::ExtractorConfig extractor;
  encode::EncoderConfig encoder;
  spdr::UmapParams umap;
  spdr::Method dr_method = spdr::Method::umap;
  std::vector<double> raw_weights;  // empty = uniform
  double alpha = 3.0;
  double q_max = 100.0;  // overridden by the corpus manifest when present

  double tau = 0.0;  // > 0 skips calibration
  double calib_fraction = 0.5;
  uint64_t split_seed = 7;
  fbc::ClusterStrategy strategy = fbc::ClusterStrategy::greedy_leader;
  std::string index_kind = "exact";  // "exact" | "ivf"
  fbc::IvfParams ivf;

  corpus::GeneratorConfig generator = corpus::GeneratorConfig::defaults();
  uint64_t generator_seed = 42;

  int threads = 1;

  static PipelineConfig from_json_file(const std::filesystem::path& path);
  static PipelineConfig from_json_text(const std::string& text);
  // Stable serialization used for fingerprinting; key order is fixed.
  std::string canonical_json() const;
  void validate() const;
};

enum class Stage { extract, encode, reduce, fuse, cluster, store };
const char* stage_name(Stage s);

struct StageInfo {
  std::string name;
  bool skipped = false;
  std::string fingerprint;
  double elapsed_ms = 0.0;
  std::vector<std::string> outputs;
};

struct RunManifest {
  std::string config_fingerprint;
  std::vector<StageInfo> stages;
};

// Runs all stages in order, skipping any whose inputs, config slice and
// outputs are unchanged since the recorded stamp. force reruns everything.
RunManifest run_pipeline(const PipelineConfig& cfg, bool force = false);

// Runs exactly one stage, unconditionally, refreshing its stamp.
StageInfo run_single_stage(const PipelineConfig& cfg, Stage stage);

RunManifest load_run_manifest(const std::filesystem::path& path);
void save_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace fitrep::app
