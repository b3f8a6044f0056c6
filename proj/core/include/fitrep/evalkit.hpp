#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fitrep/chie.hpp"
#include "fitrep/corpus.hpp"
#include "fitrep/encode.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/matrix.hpp"
#include "fitrep/spdr.hpp"

namespace fitrep::eval {

// Precision/recall/F1 over labeled pairs only: a pair counts as predicted
// duplicate iff both items share a cluster. Zero denominators yield 0.
struct PairMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  size_t tn = 0;
};
PairMetrics pair_metrics(const fbc::ClusterAssignment& assignment,
                         std::span<const corpus::LabeledPair> pairs);

// Rank-based neighbourhood preservation of an embedding, in [0, 1] for sane
// k; requires k < rows/2.
double trustworthiness(const Matrix& high, const Matrix& low, int k);

// Deterministic shuffle split of the labeled pairs into (calibration, eval).
std::pair<std::vector<corpus::LabeledPair>, std::vector<corpus::LabeledPair>> split_pairs(
    std::span<const corpus::LabeledPair> pairs, double calib_fraction, uint64_t seed);

struct ExperimentConfig {
  corpus::ConceptSchema schema = corpus::ConceptSchema::default_schema();
  chie::ExtractorConfig extractor;
  encode::EncoderConfig encoder;
  spdr::UmapParams umap;
  spdr::Method dr_method = spdr::Method::umap;
  std::vector<double> raw_weights;  // empty = uniform over all schema dims
  fbc::QuantityMapParams quantity;
  fbc::ClusterStrategy strategy = fbc::ClusterStrategy::greedy_leader;
  double calib_fraction = 0.5;
  uint64_t split_seed = 7;
  int threads = 1;
};

struct ExperimentResult {
  fbc::ClusterAssignment assignment;
  double tau = 0.0;
  PairMetrics calib_metrics;
  PairMetrics eval_metrics;
  double mean_trustworthiness = 0.0;
  size_t n_quarantined = 0;
  size_t n_pairs_dropped = 0;  // labeled pairs referencing missing items
};

// The attention-guided pipeline, in memory: extract, encode per dimension,
// reduce per dimension, fuse with the quantity channel, calibrate tau on the
// calibration split, range-search cluster, score both splits.
ExperimentResult run_fitrep(std::span<const corpus::Item> items,
                            std::span<const corpus::LabeledPair> pairs,
                            const ExperimentConfig& cfg);

// Flat baseline: one concatenated summary text per item, a single encoder
// call, a single reducer, its own calibrated tau, same clustering strategy.
ExperimentResult run_bbm(std::span<const corpus::Item> items,
                         std::span<const corpus::LabeledPair> pairs, const ExperimentConfig& cfg);

struct MethodRow {
  std::string method;
  double tau = 0.0;
  PairMetrics eval_metrics;
  double mean_trustworthiness = 0.0;
  size_t n_clusters = 0;
};

struct ComparisonReport {
  std::string kind = "compare_dr";  // or "eval" for the pipeline head-to-head
  std::string corpus_fingerprint;
  std::string config_fingerprint;
  size_t n_items = 0;
  size_t n_pairs = 0;
  size_t n_calib = 0;
  size_t n_eval = 0;
  double calib_fraction = 0.0;
  uint64_t split_seed = 0;
  uint64_t encoder_seed = 0;
  uint64_t reduce_seed = 0;
  std::vector<MethodRow> methods;
};

// Runs the pipeline once per reduction method (shared corpus, shared split)
// and collects directional evidence.
ComparisonReport compare_dr_methods(std::span<const corpus::Item> items,
                                    std::span<const corpus::LabeledPair> pairs,
                                    const ExperimentConfig& cfg,
                                    std::span<const spdr::Method> methods);

// Head-to-head of the per-dimension pipeline against the flat baseline on a
// shared corpus and split; rows are named "fitrep" and "bbm".
ComparisonReport run_head_to_head(std::span<const corpus::Item> items,
                                  std::span<const corpus::LabeledPair> pairs,
                                  const ExperimentConfig& cfg);

std::string method_name(spdr::Method m);
std::string corpus_fingerprint(std::span<const corpus::Item> items);
std::string experiment_fingerprint(const ExperimentConfig& cfg);

// Byte-deterministic for identical inputs: no timestamps, fixed formatting.
void save_comparison_report(const std::filesystem::path& json_path,
                            const std::filesystem::path& txt_path, const ComparisonReport& report);

}  // namespace fitrep::eval
