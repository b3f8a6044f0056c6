#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fitrep/corpus.hpp"
#include "fitrep/errors.hpp"
#include "fitrep/evalkit.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/io_util.hpp"

using namespace fitrep;
using corpus::LabeledPair;
using fbc::ClusterAssignment;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  auto dir = fs::temp_directory_path() / leaf;
  fs::create_directories(dir);
  return dir;
}

ClusterAssignment assignment_of(std::vector<std::string> ids, std::vector<int32_t> clusters) {
  ClusterAssignment a;
  a.item_ids = std::move(ids);
  a.cluster_ids = std::move(clusters);
  a.n_clusters = static_cast<size_t>(*std::max_element(a.cluster_ids.begin(),
                                                       a.cluster_ids.end())) + 1;
  return a;
}

eval::ExperimentConfig fast_config() {
  eval::ExperimentConfig cfg;
  cfg.encoder.dim = 64;
  cfg.umap.n_neighbors = 6;
  cfg.umap.n_epochs = 60;
  cfg.umap.target_dim.mode = spdr::TargetDimPolicy::Mode::fixed;
  cfg.umap.target_dim.fixed_dim = 4;
  // single threaded so reruns are bit-identical; the determinism checks
  // below rely on it
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("pair metrics on a perfect clustering") {
  auto a = assignment_of({"a", "b", "c", "d"}, {0, 0, 1, 1});
  std::vector<LabeledPair> pairs{{"a", "b", true}, {"c", "d", true}, {"a", "c", false}};
  auto m = eval::pair_metrics(a, pairs);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.tp == 2);
  CHECK(m.tn == 1);
}

TEST_CASE("pair metrics with all singletons use the zero convention") {
  auto a = assignment_of({"a", "b", "c", "d"}, {0, 1, 2, 3});
  std::vector<LabeledPair> pairs{{"a", "b", true}, {"c", "d", true}};
  auto m = eval::pair_metrics(a, pairs);
  // nothing is predicted duplicate: tp = fp = 0, precision reported as 0
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.fn == 2);
}

TEST_CASE("pair metrics on one mega-cluster") {
  auto a = assignment_of({"a", "b", "c", "d"}, {0, 0, 0, 0});
  std::vector<LabeledPair> pairs{{"a", "b", true}, {"c", "d", true}, {"a", "c", false}};
  auto m = eval::pair_metrics(a, pairs);
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == doctest::Approx(0.8));
}

TEST_CASE("pair metrics name the unknown item") {
  auto a = assignment_of({"a", "b"}, {0, 0});
  std::vector<LabeledPair> pairs{{"a", "ghost", true}};
  CHECK_THROWS_WITH_AS(eval::pair_metrics(a, pairs), doctest::Contains("ghost"), ValidationError);
}

TEST_CASE("pair metrics only depend on the partition, not the labels") {
  std::vector<LabeledPair> pairs{{"a", "b", true}, {"b", "c", false}, {"c", "d", true}};
  auto m1 = eval::pair_metrics(assignment_of({"a", "b", "c", "d"}, {0, 0, 1, 1}), pairs);
  auto m2 = eval::pair_metrics(assignment_of({"a", "b", "c", "d"}, {3, 3, 0, 0}), pairs);
  CHECK(m1.tp == m2.tp);
  CHECK(m1.fp == m2.fp);
  CHECK(m1.fn == m2.fn);
  CHECK(m1.tn == m2.tn);
}

TEST_CASE("trustworthiness matches the frozen fixture") {
  const size_t n = 12;
  Matrix high(n, 4), low(n, 2);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < 4; ++j) high.at(i, j) = static_cast<float>((i * 7 + j * 13) % 23);
    for (size_t j = 0; j < 2; ++j) low.at(i, j) = static_cast<float>((i * 11 + j * 5) % 19);
  }
  CHECK(eval::trustworthiness(high, low, 3) == doctest::Approx(0.4920634920634921).epsilon(1e-12));
}

TEST_CASE("trustworthiness is 1 for an identity embedding and drops under scrambling") {
  Matrix line(20, 1), scrambled(20, 1);
  for (size_t i = 0; i < 20; ++i) {
    line.at(i, 0) = static_cast<float>(i);
    scrambled.at(i, 0) = static_cast<float>((i * 7) % 20);
  }
  CHECK(eval::trustworthiness(line, line, 4) == 1.0);
  CHECK(eval::trustworthiness(line, scrambled, 4) ==
        doctest::Approx(0.6092592592592592).epsilon(1e-12));
  CHECK(eval::trustworthiness(line, scrambled, 4) < 0.7);
}

TEST_CASE("trustworthiness validates its arguments") {
  Matrix m(10, 2);
  Matrix wrong(9, 2);
  CHECK_THROWS_AS(eval::trustworthiness(m, wrong, 2), ValidationError);
  CHECK_THROWS_AS(eval::trustworthiness(m, m, 5), ValidationError);  // 2k >= n
  CHECK_THROWS_AS(eval::trustworthiness(m, m, 0), ValidationError);
  Matrix tiny(2, 2);
  CHECK_THROWS_AS(eval::trustworthiness(tiny, tiny, 1), ValidationError);
}

TEST_CASE("pair splitting is a deterministic partition") {
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 21; ++i) {
    pairs.push_back({"a" + std::to_string(i), "b" + std::to_string(i), i % 3 == 0});
  }
  auto [calib1, eval1] = eval::split_pairs(pairs, 0.5, 11);
  auto [calib2, eval2] = eval::split_pairs(pairs, 0.5, 11);
  CHECK(calib1 == calib2);
  CHECK(eval1 == eval2);
  CHECK(calib1.size() == 11);  // ceil(0.5 * 21)
  CHECK(eval1.size() == 10);

  std::multiset<std::string> before, after;
  for (const auto& p : pairs) before.insert(p.item_a + "|" + p.item_b);
  for (const auto& p : calib1) after.insert(p.item_a + "|" + p.item_b);
  for (const auto& p : eval1) after.insert(p.item_a + "|" + p.item_b);
  CHECK(before == after);

  auto [calib3, eval3] = eval::split_pairs(pairs, 0.5, 12);
  CHECK(calib1 != calib3);

  CHECK_THROWS_AS(eval::split_pairs(pairs, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(eval::split_pairs(pairs, 1.0, 1), ConfigError);
}

TEST_CASE("the per-dimension pipeline runs end to end and is deterministic") {
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 8;
  gen.items_per_group = 3;
  gen.n_confounder_pairs = 4;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 31);

  auto cfg = fast_config();
  auto res1 = eval::run_fitrep(items, gt.pairs, cfg);
  CHECK(res1.assignment.item_ids.size() == items.size());
  CHECK(res1.tau > 0.0);
  CHECK(res1.n_quarantined == 0);
  CHECK(res1.n_pairs_dropped == 0);
  CHECK(res1.eval_metrics.precision >= 0.0);
  CHECK(res1.eval_metrics.precision <= 1.0);
  CHECK(res1.mean_trustworthiness > 0.0);
  CHECK(res1.mean_trustworthiness <= 1.0);
  size_t scored = res1.eval_metrics.tp + res1.eval_metrics.fp + res1.eval_metrics.fn +
                  res1.eval_metrics.tn;
  CHECK(scored + res1.calib_metrics.tp + res1.calib_metrics.fp + res1.calib_metrics.fn +
            res1.calib_metrics.tn ==
        gt.pairs.size());

  auto res2 = eval::run_fitrep(items, gt.pairs, cfg);
  CHECK(res2.tau == res1.tau);
  CHECK(res2.assignment.cluster_ids == res1.assignment.cluster_ids);
  CHECK(res2.eval_metrics.f1 == res1.eval_metrics.f1);

  // ids align with the sorted record order
  CHECK(std::is_sorted(res1.assignment.item_ids.begin(), res1.assignment.item_ids.end()));
}

TEST_CASE("the flat baseline runs end to end") {
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 6;
  gen.items_per_group = 3;
  gen.n_confounder_pairs = 3;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 33);

  auto cfg = fast_config();
  auto res = eval::run_bbm(items, gt.pairs, cfg);
  CHECK(res.assignment.item_ids.size() == items.size());
  CHECK(res.tau > 0.0);
  CHECK(std::is_sorted(res.assignment.item_ids.begin(), res.assignment.item_ids.end()));

  auto again = eval::run_bbm(items, gt.pairs, cfg);
  CHECK(again.assignment.cluster_ids == res.assignment.cluster_ids);
  CHECK(again.tau == res.tau);
}

TEST_CASE("reduction comparison report carries both methods") {
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 5;
  gen.items_per_group = 3;
  gen.n_confounder_pairs = 2;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 13);

  auto cfg = fast_config();
  std::vector<spdr::Method> methods{spdr::Method::umap, spdr::Method::pca};
  auto report = eval::compare_dr_methods(items, gt.pairs, cfg, methods);

  CHECK(report.kind == "compare_dr");
  REQUIRE(report.methods.size() == 2);
  CHECK(report.methods[0].method == "umap");
  CHECK(report.methods[1].method == "pca");
  CHECK(report.n_items == items.size());
  CHECK(report.n_pairs == gt.pairs.size());
  CHECK(report.n_calib + report.n_eval == gt.pairs.size());
  CHECK(!report.corpus_fingerprint.empty());
  CHECK(!report.config_fingerprint.empty());

  CHECK_THROWS_AS(eval::compare_dr_methods(items, gt.pairs, cfg, {}), ConfigError);
}

TEST_CASE("head-to-head report names its rows") {
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 5;
  gen.items_per_group = 3;
  gen.n_confounder_pairs = 2;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 17);

  auto report = eval::run_head_to_head(items, gt.pairs, fast_config());
  CHECK(report.kind == "eval");
  REQUIRE(report.methods.size() == 2);
  CHECK(report.methods[0].method == "fitrep");
  CHECK(report.methods[1].method == "bbm");
  for (const auto& row : report.methods) {
    CHECK(row.tau > 0.0);
    CHECK(row.n_clusters > 0);
  }
}

TEST_CASE("fingerprints react to their inputs") {
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 3;
  gen.items_per_group = 2;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 41);

  auto fp = eval::corpus_fingerprint(items);
  CHECK(fp.size() == 16);

  // row order must not matter
  auto shuffled = items;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(eval::corpus_fingerprint(shuffled) == fp);

  auto mutated = items;
  mutated[0].title += "!";
  CHECK(eval::corpus_fingerprint(mutated) != fp);

  auto cfg = fast_config();
  auto base = eval::experiment_fingerprint(cfg);
  cfg.quantity.alpha = 4.0;
  CHECK(eval::experiment_fingerprint(cfg) != base);
  cfg = fast_config();
  cfg.umap.seed = 1234;
  CHECK(eval::experiment_fingerprint(cfg) != base);
  cfg = fast_config();
  CHECK(eval::experiment_fingerprint(cfg) == base);
}

TEST_CASE("saved reports are byte-identical across reruns") {
  auto dir = temp_dir("fitrep_evalkit_report");
  auto gen = corpus::GeneratorConfig::defaults();
  gen.n_groups = 4;
  gen.items_per_group = 3;
  gen.n_confounder_pairs = 2;
  auto [items, gt] = corpus::generate_synthetic_corpus(gen, 19);
  auto cfg = fast_config();

  auto report1 = eval::run_head_to_head(items, gt.pairs, cfg);
  eval::save_comparison_report(dir / "r1.json", dir / "r1.txt", report1);
  auto report2 = eval::run_head_to_head(items, gt.pairs, cfg);
  eval::save_comparison_report(dir / "r2.json", dir / "r2.txt", report2);

  CHECK(io::read_file(dir / "r1.json") == io::read_file(dir / "r2.json"));
  CHECK(io::read_file(dir / "r1.txt") == io::read_file(dir / "r2.txt"));

  auto j = nlohmann::json::parse(io::read_file(dir / "r1.json"));
  CHECK(j["kind"] == "eval");
  CHECK(j["precision_convention"] == "tp=0 with fp=0 reports precision 0, not 1");
  CHECK(j["config"]["seeds"].contains("split"));
  CHECK(j["config"]["seeds"].contains("encoder"));
  CHECK(j["config"]["seeds"].contains("reduce"));
  CHECK(j["methods"].size() == 2);
  CHECK(j["methods"][0].contains("clusters"));

  auto txt = io::read_file(dir / "r1.txt");
  CHECK(txt.find("pipeline comparison") != std::string::npos);
  CHECK(txt.find("precision convention") != std::string::npos);
}
