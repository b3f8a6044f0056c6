#include "fitrep/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::eval {

using nlohmann::json;

PairMetrics pair_metrics(const fbc::ClusterAssignment& assignment,
                         std::span<const corpus::LabeledPair> pairs) {
  auto lookup = fbc::cluster_lookup(assignment);
  PairMetrics m;
  for (const auto& p : pairs) {
    auto a = lookup.find(p.item_a);
    auto b = lookup.find(p.item_b);
    if (a == lookup.end()) throw ValidationError("unknown item in labeled pair: " + p.item_a);
    if (b == lookup.end()) throw ValidationError("unknown item in labeled pair: " + p.item_b);
    bool predicted = a->second == b->second;
    if (predicted && p.is_duplicate) ++m.tp;
    else if (predicted && !p.is_duplicate) ++m.fp;
    else if (!predicted && p.is_duplicate) ++m.fn;
    else ++m.tn;
  }
  m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

double trustworthiness(const Matrix& high, const Matrix& low, int k) {
  const size_t n = high.rows();
  if (low.rows() != n) throw ValidationError("trustworthiness: row count mismatch");
  if (n < 3) throw ValidationError("trustworthiness: need at least 3 rows");
  if (k < 1 || 2 * static_cast<size_t>(k) >= n) {
    throw ValidationError("trustworthiness: k must satisfy 1 <= k < rows/2");
  }

  // rank_high[i][j]: 1-based rank of j among i's neighbours in the original
  // space, ties broken toward the lower index.
  std::vector<int> rank_high(n * n, 0);
  std::vector<std::pair<float, int32_t>> scratch;
  for (size_t i = 0; i < n; ++i) {
    scratch.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      scratch.emplace_back(static_cast<float>(squared_distance(high.row_span(i), high.row_span(j))),
                           static_cast<int32_t>(j));
    }
    std::sort(scratch.begin(), scratch.end());
    for (size_t r = 0; r < scratch.size(); ++r) {
      rank_high[i * n + static_cast<size_t>(scratch[r].second)] = static_cast<int>(r + 1);
    }
  }

  double penalty = 0.0;
  for (size_t i = 0; i < n; ++i) {
    scratch.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      scratch.emplace_back(static_cast<float>(squared_distance(low.row_span(i), low.row_span(j))),
                           static_cast<int32_t>(j));
    }
    std::partial_sort(scratch.begin(), scratch.begin() + k, scratch.end());
    for (int c = 0; c < k; ++c) {
      int r = rank_high[i * n + static_cast<size_t>(scratch[c].second)];
      if (r > k) penalty += r - k;
    }
  }
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

std::pair<std::vector<corpus::LabeledPair>, std::vector<corpus::LabeledPair>> split_pairs(
    std::span<const corpus::LabeledPair> pairs, double calib_fraction, uint64_t seed) {
  if (!(calib_fraction > 0.0) || !(calib_fraction < 1.0)) {
    throw ConfigError("calib_fraction must be in (0, 1)");
  }
  std::vector<corpus::LabeledPair> shuffled(pairs.begin(), pairs.end());
  Rng rng(seed);
  rng.shuffle(shuffled);
  size_t n_calib = static_cast<size_t>(std::ceil(calib_fraction * static_cast<double>(shuffled.size())));
  n_calib = std::min(n_calib, shuffled.size());
  std::vector<corpus::LabeledPair> calib(shuffled.begin(), shuffled.begin() + static_cast<long>(n_calib));
  std::vector<corpus::LabeledPair> rest(shuffled.begin() + static_cast<long>(n_calib), shuffled.end());
  return {std::move(calib), std::move(rest)};
}

namespace {

// Labeled pairs whose endpoints survived extraction.
std::vector<corpus::LabeledPair> usable_pairs(std::span<const corpus::LabeledPair> pairs,
                                              std::span<const std::string> ids,
                                              size_t* n_dropped) {
  std::unordered_map<std::string, bool> known;
  known.reserve(ids.size());
  for (const auto& id : ids) known.emplace(id, true);
  std::vector<corpus::LabeledPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (known.count(p.item_a) && known.count(p.item_b)) {
      out.push_back(p);
    } else {
      ++*n_dropped;
    }
  }
  return out;
}

int trust_k(int wanted, size_t n) {
  int k = std::min<int>(wanted, static_cast<int>((n - 1) / 2));
  return std::max(1, k);
}

struct ReducedSet {
  encode::VectorStore normalized;     // unit rows per dim
  std::vector<double> trust_scores;   // per dim
};

ReducedSet reduce_store(const encode::VectorStore& enc, const spdr::UmapParams& params,
                        spdr::Method method, int threads) {
  ReducedSet out;
  out.normalized.ids = enc.ids;
  out.normalized.dim_names = enc.dim_names;
  for (size_t k = 0; k < enc.dims.size(); ++k) {
    const Matrix& x = enc.dims[k];
    Matrix reduced;
    if (method == spdr::Method::umap) {
      spdr::UmapParams p = params;
      p.n_threads = threads;
      reduced = spdr::fit_umap(x, p).first;
    } else {
      int d = spdr::select_target_dim(x, params.target_dim);
      reduced = spdr::fit_pca(x, d).first;
    }
    int kt = trust_k(params.n_neighbors, x.rows());
    out.trust_scores.push_back(x.rows() >= 3 ? trustworthiness(x, reduced, kt) : 0.0);
    out.normalized.dims.push_back(spdr::l2_normalize(reduced));
  }
  return out;
}

ExperimentResult cluster_and_score(const Matrix& fused, std::span<const std::string> ids,
                                   std::span<const corpus::LabeledPair> pairs,
                                   const ExperimentConfig& cfg, size_t n_quarantined,
                                   double mean_trust) {
  ExperimentResult result;
  result.n_quarantined = n_quarantined;
  result.mean_trustworthiness = mean_trust;

  auto filtered = usable_pairs(pairs, ids, &result.n_pairs_dropped);
  if (result.n_pairs_dropped > 0) {
    log_warn("dropped " + std::to_string(result.n_pairs_dropped) +
             " labeled pairs referencing missing items");
  }
  auto [calib, holdout] = split_pairs(filtered, cfg.calib_fraction, cfg.split_seed);
  if (calib.empty()) throw ValidationError("calibration split is empty");

  result.tau = fbc::calibrate_threshold(fused, ids, calib);

  auto index = fbc::build_exact_index(fused);
  std::vector<std::vector<int32_t>> neighborhoods(ids.size());
  parallel_for(ids.size(), cfg.threads, [&](size_t i) {
    auto hits = index->range_search(fused.row_span(i), result.tau);
    neighborhoods[i].reserve(hits.size());
    for (const auto& h : hits) neighborhoods[i].push_back(h.index);
  });
  result.assignment = fbc::cluster(neighborhoods, ids, cfg.strategy);
  result.calib_metrics = pair_metrics(result.assignment, calib);
  result.eval_metrics = pair_metrics(result.assignment, holdout);
  return result;
}

}  // namespace

ExperimentResult run_fitrep(std::span<const corpus::Item> items,
                            std::span<const corpus::LabeledPair> pairs,
                            const ExperimentConfig& cfg) {
  chie::ExtractorConfig ex = cfg.extractor;
  ex.schema = cfg.schema;
  auto batch = chie::extract_batch(items, ex, cfg.threads);
  if (batch.records.empty()) throw ValidationError("no items survived extraction");

  auto enc = encode::encode_records(batch.records, cfg.schema, cfg.encoder, cfg.threads);
  ReducedSet reduced = reduce_store(enc, cfg.umap, cfg.dr_method, cfg.threads);

  std::vector<double> quantities;
  quantities.reserve(batch.records.size());
  for (const auto& rec : batch.records) quantities.push_back(rec.quantity);

  std::vector<double> raw = cfg.raw_weights;
  if (raw.empty()) raw.assign(cfg.schema.d(), 1.0);
  if (raw.size() != cfg.schema.d()) {
    throw ConfigError("expected " + std::to_string(cfg.schema.d()) + " fusion weights, got " +
                      std::to_string(raw.size()));
  }
  auto weights = fbc::normalize_weights(raw);
  Matrix fused = fbc::fuse_all(reduced.normalized, quantities, weights, cfg.quantity, cfg.threads);

  double mean_trust = reduced.trust_scores.empty()
                          ? 0.0
                          : std::accumulate(reduced.trust_scores.begin(),
                                            reduced.trust_scores.end(), 0.0) /
                                static_cast<double>(reduced.trust_scores.size());
  return cluster_and_score(fused, reduced.normalized.ids, pairs, cfg, batch.quarantined.size(),
                           mean_trust);
}

ExperimentResult run_bbm(std::span<const corpus::Item> items,
                         std::span<const corpus::LabeledPair> pairs, const ExperimentConfig& cfg) {
  // One flat summary per item: raw attributes in schema order (title as the
  // fallback), no per-dimension structure and no quantity channel.
  std::vector<std::string> ids;
  std::vector<std::string> summaries;
  ids.reserve(items.size());
  summaries.reserve(items.size());
  std::vector<size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return items[a].item_id < items[b].item_id; });
  for (size_t i : order) {
    const auto& item = items[i];
    std::string summary;
    for (const auto& dim : cfg.schema.dims) {
      auto it = item.raw_attrs.find(dim.name);
      if (it == item.raw_attrs.end()) continue;
      if (!summary.empty()) summary += " ";
      summary += it->second;
    }
    if (summary.empty()) summary = item.title;
    if (summary.empty()) summary = item.item_id;
    ids.push_back(item.item_id);
    summaries.push_back(std::move(summary));
  }

  auto rows = encode::encode_texts(summaries, cfg.encoder, cfg.threads);
  Matrix enc(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), enc.row(i));

  Matrix reduced;
  if (cfg.dr_method == spdr::Method::umap) {
    spdr::UmapParams p = cfg.umap;
    p.n_threads = cfg.threads;
    reduced = spdr::fit_umap(enc, p).first;
  } else {
    int d = spdr::select_target_dim(enc, cfg.umap.target_dim);
    reduced = spdr::fit_pca(enc, d).first;
  }
  double trust = enc.rows() >= 3
                     ? trustworthiness(enc, reduced, trust_k(cfg.umap.n_neighbors, enc.rows()))
                     : 0.0;
  Matrix unit = spdr::l2_normalize(reduced);
  return cluster_and_score(unit, ids, pairs, cfg, 0, trust);
}

std::string method_name(spdr::Method m) { return m == spdr::Method::umap ? "umap" : "pca"; }

namespace {

std::string hex16(uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

MethodRow result_row(std::string name, const ExperimentResult& res) {
  MethodRow row;
  row.method = std::move(name);
  row.tau = res.tau;
  row.eval_metrics = res.eval_metrics;
  row.mean_trustworthiness = res.mean_trustworthiness;
  row.n_clusters = res.assignment.n_clusters;
  return row;
}

ComparisonReport report_skeleton(std::span<const corpus::Item> items,
                                 std::span<const corpus::LabeledPair> pairs,
                                 const ExperimentConfig& cfg) {
  ComparisonReport report;
  report.corpus_fingerprint = corpus_fingerprint(items);
  report.config_fingerprint = experiment_fingerprint(cfg);
  report.n_items = items.size();
  report.n_pairs = pairs.size();
  report.calib_fraction = cfg.calib_fraction;
  report.split_seed = cfg.split_seed;
  report.encoder_seed = cfg.encoder.seed;
  report.reduce_seed = cfg.umap.seed;
  auto [calib, holdout] = split_pairs(pairs, cfg.calib_fraction, cfg.split_seed);
  report.n_calib = calib.size();
  report.n_eval = holdout.size();
  return report;
}

}  // namespace

std::string corpus_fingerprint(std::span<const corpus::Item> items) {
  std::vector<corpus::Item> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const corpus::Item& a, const corpus::Item& b) { return a.item_id < b.item_id; });
  return hex16(hash64(corpus::items_to_jsonl(sorted)));
}

std::string experiment_fingerprint(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << method_name(cfg.dr_method) << "|enc:" << cfg.encoder.dim << "," << cfg.encoder.seed
      << "|umap:" << cfg.umap.n_neighbors << "," << cfg.umap.min_dist << "," << cfg.umap.n_epochs
      << "," << cfg.umap.seed << "|q:" << cfg.quantity.alpha << "," << cfg.quantity.q_max
      << "|split:" << cfg.calib_fraction << "," << cfg.split_seed
      << "|strategy:" << fbc::cluster_strategy_name(cfg.strategy);
  for (double w : cfg.raw_weights) out << "|w:" << w;
  return hex16(hash64(out.str()));
}

ComparisonReport compare_dr_methods(std::span<const corpus::Item> items,
                                    std::span<const corpus::LabeledPair> pairs,
                                    const ExperimentConfig& cfg,
                                    std::span<const spdr::Method> methods) {
  if (methods.empty()) throw ConfigError("compare_dr_methods: no methods given");
  ComparisonReport report = report_skeleton(items, pairs, cfg);
  for (spdr::Method m : methods) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.dr_method = m;
    ExperimentResult res = run_fitrep(items, pairs, run_cfg);
    report.methods.push_back(result_row(method_name(m), res));
  }
  return report;
}

ComparisonReport run_head_to_head(std::span<const corpus::Item> items,
                                  std::span<const corpus::LabeledPair> pairs,
                                  const ExperimentConfig& cfg) {
  ComparisonReport report = report_skeleton(items, pairs, cfg);
  report.kind = "eval";
  report.methods.push_back(result_row("fitrep", run_fitrep(items, pairs, cfg)));
  report.methods.push_back(result_row("bbm", run_bbm(items, pairs, cfg)));
  return report;
}

namespace {

std::string fixed6(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6) << v;
  return out.str();
}

json metrics_to_json(const PairMetrics& m) {
  json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  return j;
}

}  // namespace

void save_comparison_report(const std::filesystem::path& json_path,
                            const std::filesystem::path& txt_path,
                            const ComparisonReport& report) {
  json j;
  j["kind"] = report.kind;
  j["corpus"] = {{"fingerprint", report.corpus_fingerprint},
                 {"items", report.n_items},
                 {"labeled_pairs", report.n_pairs}};
  j["config"] = {{"fingerprint", report.config_fingerprint},
                 {"seeds",
                  {{"split", report.split_seed},
                   {"encoder", report.encoder_seed},
                   {"reduce", report.reduce_seed}}}};
  j["split"] = {{"calib_fraction", report.calib_fraction},
                {"calib_pairs", report.n_calib},
                {"eval_pairs", report.n_eval}};
  j["precision_convention"] = "tp=0 with fp=0 reports precision 0, not 1";
  json methods = json::array();
  for (const auto& row : report.methods) {
    json r;
    r["method"] = row.method;
    r["tau"] = row.tau;
    r["clusters"] = row.n_clusters;
    r["eval"] = metrics_to_json(row.eval_metrics);
    r["trustworthiness"] = row.mean_trustworthiness;
    methods.push_back(r);
  }
  j["methods"] = methods;
  io::atomic_write_file(json_path, j.dump(2) + "\n");

  std::ostringstream txt;
  txt << (report.kind == "eval" ? "pipeline comparison (labeled-pair metrics, holdout split)"
                                : "reduction method comparison (labeled-pair metrics, holdout split)")
      << "\n";
  txt << "corpus " << report.corpus_fingerprint << "  config " << report.config_fingerprint
      << "  items " << report.n_items << "  pairs " << report.n_pairs << " (calib "
      << report.n_calib << ", eval " << report.n_eval << ")\n";
  txt << "seeds: split " << report.split_seed << ", encoder " << report.encoder_seed
      << ", reduce " << report.reduce_seed << "\n";
  txt << "precision convention: tp=0 with fp=0 reports 0\n";
  txt << "\n";
  txt << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "tau"
      << std::setw(12) << "precision" << std::setw(12) << "recall" << std::setw(12) << "f1"
      << std::setw(12) << "trust" << std::setw(10) << "clusters" << "\n";
  for (const auto& row : report.methods) {
    txt << std::left << std::setw(10) << row.method << std::right << std::setw(12)
        << fixed6(row.tau) << std::setw(12) << fixed6(row.eval_metrics.precision) << std::setw(12)
        << fixed6(row.eval_metrics.recall) << std::setw(12) << fixed6(row.eval_metrics.f1)
        << std::setw(12) << fixed6(row.mean_trustworthiness) << std::setw(10) << row.n_clusters
        << "\n";
  }
  io::atomic_write_file(txt_path, txt.str());
}

}  // namespace fitrep::eval
