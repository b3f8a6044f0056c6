#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "fitrep/errors.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/rng.hpp"

using namespace fitrep;
namespace fs = std::filesystem;

namespace {

std::vector<float> random_unit(Rng& rng, size_t dim) {
  std::vector<float> v(dim);
  double nrm = 0.0;
  while (nrm < 1e-12) {
    for (auto& x : v) x = static_cast<float>(rng.next_gaussian());
    nrm = 0.0;
    for (float x : v) nrm += static_cast<double>(x) * x;
    nrm = std::sqrt(nrm);
  }
  for (auto& x : v) x = static_cast<float>(x / nrm);
  return v;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "fitrep_fbc_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("quantity angle matches the high-precision oracle") {
  fbc::QuantityMapParams p{3.0, 100.0};
  // reference values from an mpmath evaluation at 50 digits
  CHECK(fbc::quantity_angle(1.0, p) == 0.0);
  CHECK(fbc::quantity_angle(10.0, p) == doctest::Approx(0.37168262114002205).epsilon(1e-12));
  CHECK(fbc::quantity_angle(100.0, p) == doctest::Approx(1.4902092753730994).epsilon(1e-12));
}

TEST_CASE("quantity angle is strictly increasing and stays below pi/2") {
  fbc::QuantityMapParams p{3.0, 100.0};
  double prev = -1.0;
  for (int q = 1; q <= 100; ++q) {
    double theta = fbc::quantity_angle(q, p);
    CHECK(theta > prev);
    CHECK(theta < 1.5707963267948966);
    prev = theta;
  }
  CHECK(fbc::quantity_angle(2.0, p) < fbc::quantity_angle(5.0, p));
}

TEST_CASE("quantity angle rejects q below 1 and clamps q above q_max") {
  fbc::QuantityMapParams p{3.0, 100.0};
  CHECK_THROWS_AS(fbc::quantity_angle(0.5, p), ValidationError);
  CHECK_THROWS_AS(fbc::quantity_angle(std::nan(""), p), ValidationError);
  CHECK(fbc::quantity_angle(250.0, p) == fbc::quantity_angle(100.0, p));
}

TEST_CASE("weight normalization") {
  std::vector<double> uniform(8, 1.0);
  auto w = fbc::normalize_weights(uniform);
  for (double v : w.w) CHECK(v == doctest::Approx(0.125));

  std::vector<double> pair{1.0, 3.0};
  auto w2 = fbc::normalize_weights(pair);
  CHECK(w2.w[0] == doctest::Approx(0.25));
  CHECK(w2.w[1] == doctest::Approx(0.75));

  std::vector<double> with_zero{1.0, 0.0};
  CHECK_THROWS_AS(fbc::normalize_weights(with_zero), ValidationError);
  std::vector<double> with_negative{1.0, -0.5};
  CHECK_THROWS_AS(fbc::normalize_weights(with_negative), ValidationError);
  CHECK_THROWS_AS(fbc::normalize_weights(std::vector<double>{}), ValidationError);
}

TEST_CASE("fuse hand example: one text dim, q=1") {
  std::vector<std::vector<float>> e{{1.0f, 0.0f}};
  auto w = fbc::normalize_weights(std::vector<double>{1.0, 1.0});
  auto x = fbc::fuse(e, 1.0, w, {3.0, 100.0});
  REQUIRE(x.size() == 4);
  double r = std::sqrt(0.5);
  CHECK(x[0] == doctest::Approx(r).epsilon(1e-7));
  CHECK(x[1] == 0.0f);
  CHECK(x[2] == doctest::Approx(r).epsilon(1e-7));
  CHECK(x[3] == 0.0f);
}

TEST_CASE("fuse rejects non-unit embeddings") {
  std::vector<std::vector<float>> e{{0.9f, 0.0f}};
  auto w = fbc::normalize_weights(std::vector<double>{1.0, 1.0});
  CHECK_THROWS_AS(fbc::fuse(e, 1.0, w, {3.0, 100.0}), ValidationError);
}

TEST_CASE("fused vectors are unit norm and distances decompose") {
  Rng rng(1234);
  fbc::QuantityMapParams qp{3.0, 100.0};
  const size_t dims[] = {5, 3, 7};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw;
    for (size_t k = 0; k < 4; ++k) raw.push_back(0.05 + rng.next_double());
    auto w = fbc::normalize_weights(raw);

    std::vector<std::vector<float>> ei, ej;
    for (size_t d : dims) {
      ei.push_back(random_unit(rng, d));
      ej.push_back(random_unit(rng, d));
    }
    double qi = 1.0 + 99.0 * rng.next_double();
    double qj = 1.0 + 99.0 * rng.next_double();
    auto xi = fbc::fuse(ei, qi, w, qp);
    auto xj = fbc::fuse(ej, qj, w, qp);

    double ni = 0.0, nj = 0.0;
    for (float v : xi) ni += static_cast<double>(v) * v;
    for (float v : xj) nj += static_cast<double>(v) * v;
    CHECK(std::fabs(std::sqrt(ni) - 1.0) < 1e-6);
    CHECK(std::fabs(std::sqrt(nj) - 1.0) < 1e-6);

    // 2(1 - dot) equals the squared euclidean distance for unit vectors
    double d = fbc::pairwise_distance(xi, xj);
    double sq = 0.0;
    for (size_t t = 0; t < xi.size(); ++t) {
      double diff = static_cast<double>(xi[t]) - xj[t];
      sq += diff * diff;
    }
    CHECK(std::fabs(d - sq) < 1e-6);

    // per-dimension decomposition
    double expected = 0.0;
    for (size_t k = 0; k < 3; ++k) {
      double part = 0.0;
      for (size_t t = 0; t < ei[k].size(); ++t) {
        double diff = static_cast<double>(ei[k][t]) - ej[k][t];
        part += diff * diff;
      }
      expected += w.w[k] * part;
    }
    double ti = fbc::quantity_angle(qi, qp), tj = fbc::quantity_angle(qj, qp);
    double dc = std::cos(ti) - std::cos(tj), ds = std::sin(ti) - std::sin(tj);
    expected += w.w[3] * (dc * dc + ds * ds);
    CHECK(std::fabs(d - expected) < 1e-5);
  }
}

TEST_CASE("identical fuse inputs give identical vectors at distance zero") {
  Rng rng(77);
  std::vector<std::vector<float>> e{random_unit(rng, 6), random_unit(rng, 4)};
  auto w = fbc::normalize_weights(std::vector<double>{2.0, 1.0, 1.0});
  auto a = fbc::fuse(e, 17.0, w, {3.0, 100.0});
  auto b = fbc::fuse(e, 17.0, w, {3.0, 100.0});
  CHECK(a == b);
  CHECK(fbc::pairwise_distance(a, b) == 0.0);
}

TEST_CASE("pairwise distance basics") {
  std::vector<float> ex{1.0f, 0.0f}, ey{0.0f, 1.0f};
  CHECK(fbc::pairwise_distance(ex, ex) == 0.0);
  CHECK(fbc::pairwise_distance(ex, ey) == doctest::Approx(2.0));
  std::vector<float> neg{-1.0f, 0.0f};
  CHECK(fbc::pairwise_distance(ex, neg) == doctest::Approx(4.0));
}

TEST_CASE("exact range search on the two-axis example") {
  Matrix m(2, 2);
  m.at(0, 0) = 1.0f;
  m.at(1, 1) = 1.0f;
  auto index = fbc::build_exact_index(m);
  auto hits = index->range_search(index->vectors().row_span(0), 1.0);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].index == 0);

  // tau above the distance bound returns everything
  hits = index->range_search(index->vectors().row_span(0), 4.5);
  CHECK(hits.size() == 2);
}

TEST_CASE("duplicate rows always find each other") {
  Matrix m(3, 2);
  m.at(0, 0) = 1.0f;
  m.at(1, 0) = 1.0f;
  m.at(2, 1) = 1.0f;
  auto index = fbc::build_exact_index(m);
  auto hits = index->range_search(index->vectors().row_span(0), 1e-9);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].index == 0);  // ties broken by index
  CHECK(hits[1].index == 1);
}

TEST_CASE("exact search equals a brute force double loop") {
  Rng rng(42);
  const size_t n = 300, dim = 12;
  Matrix m(n, dim);
  for (size_t i = 0; i < n; ++i) {
    auto v = random_unit(rng, dim);
    std::copy(v.begin(), v.end(), m.row(i));
  }
  auto index = fbc::build_exact_index(m);
  double tau = 0.8;
  for (size_t i = 0; i < n; ++i) {
    auto hits = index->range_search(m.row_span(i), tau);
    std::vector<fbc::SearchHit> expected;
    for (size_t j = 0; j < n; ++j) {
      double d = fbc::pairwise_distance(m.row_span(i), m.row_span(j));
      if (d < tau) expected.push_back({static_cast<int32_t>(j), static_cast<float>(d)});
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    });
    REQUIRE(hits.size() == expected.size());
    for (size_t t = 0; t < hits.size(); ++t) {
      CHECK(hits[t].index == expected[t].index);
      CHECK(hits[t].distance == expected[t].distance);
    }
  }
}

TEST_CASE("ivf with one list matches exact search") {
  Rng rng(7);
  const size_t n = 120, dim = 6;
  Matrix m(n, dim);
  for (size_t i = 0; i < n; ++i) {
    auto v = random_unit(rng, dim);
    std::copy(v.begin(), v.end(), m.row(i));
  }
  fbc::IvfParams params;
  params.nlist = 1;
  auto ivf = fbc::build_ivf_index(m, params);
  auto exact = fbc::build_exact_index(m);
  for (size_t i = 0; i < n; i += 7) {
    auto a = ivf->range_search(m.row_span(i), 0.9);
    auto b = exact->range_search(m.row_span(i), 0.9);
    REQUIRE(a.size() == b.size());
    for (size_t t = 0; t < a.size(); ++t) CHECK(a[t].index == b[t].index);
  }
}

TEST_CASE("ivf rejects nlist above the row count") {
  Matrix m(3, 2);
  m.at(0, 0) = 1.0f;
  m.at(1, 1) = 1.0f;
  m.at(2, 0) = -1.0f;
  fbc::IvfParams params;
  params.nlist = 10;
  CHECK_THROWS_AS(fbc::build_ivf_index(m, params), ValidationError);
}

TEST_CASE("ivf recall on clustered data") {
  Rng rng(99);
  const size_t n_proto = 40, per = 25, dim = 10;
  Matrix m(n_proto * per, dim);
  size_t row = 0;
  for (size_t c = 0; c < n_proto; ++c) {
    auto proto = random_unit(rng, dim);
    for (size_t r = 0; r < per; ++r, ++row) {
      std::vector<double> jittered(dim);
      double nrm = 0.0;
      for (size_t t = 0; t < dim; ++t) {
        jittered[t] = proto[t] + 0.05 * rng.next_gaussian();
        nrm += jittered[t] * jittered[t];
      }
      nrm = std::sqrt(nrm);
      for (size_t t = 0; t < dim; ++t) m.at(row, t) = static_cast<float>(jittered[t] / nrm);
    }
  }
  fbc::IvfParams params;
  params.nlist = 30;
  params.nprobe = 8;
  auto ivf = fbc::build_ivf_index(m, params);
  auto exact = fbc::build_exact_index(m);

  double total_recall = 0.0;
  size_t queries = 0;
  for (size_t i = 0; i < m.rows(); i += 10, ++queries) {
    auto approx = ivf->range_search(m.row_span(i), 0.3);
    auto truth = exact->range_search(m.row_span(i), 0.3);
    std::set<int32_t> got;
    for (const auto& h : approx) got.insert(h.index);
    size_t found = 0;
    for (const auto& h : truth) found += got.count(h.index);
    total_recall += truth.empty() ? 1.0 : static_cast<double>(found) / truth.size();
  }
  CHECK(total_recall / queries >= 0.95);
}

TEST_CASE("index save and load round trip") {
  Rng rng(5);
  const size_t n = 100, dim = 8;
  Matrix m(n, dim);
  for (size_t i = 0; i < n; ++i) {
    auto v = random_unit(rng, dim);
    std::copy(v.begin(), v.end(), m.row(i));
  }
  auto dir = temp_dir();

  for (bool use_ivf : {false, true}) {
    std::unique_ptr<fbc::Index> built;
    if (use_ivf) {
      fbc::IvfParams params;
      params.nlist = 8;
      built = fbc::build_ivf_index(m, params);
    } else {
      built = fbc::build_exact_index(m);
    }
    auto path = dir / (use_ivf ? "ivf.fbci" : "exact.fbci");
    built->save(path);
    auto loaded = fbc::load_index(path);
    CHECK(loaded->size() == n);
    CHECK(loaded->dim() == dim);
    for (size_t i = 0; i < n; i += 13) {
      auto a = built->range_search(m.row_span(i), 0.7);
      auto b = loaded->range_search(m.row_span(i), 0.7);
      REQUIRE(a.size() == b.size());
      for (size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].index == b[t].index);
        CHECK(a[t].distance == b[t].distance);
      }
    }
  }
}

TEST_CASE("load_index rejects garbage") {
  auto dir = temp_dir();
  auto path = dir / "garbage.fbci";
  io::atomic_write_file(path, "XXXXnot an index");
  CHECK_THROWS_AS(fbc::load_index(path), FormatError);
}

namespace {

// Builds a fused matrix whose labeled pair distances are exactly controlled
// through angles on the unit circle.
Matrix circle_points(std::span<const double> angles) {
  Matrix m(angles.size(), 2);
  for (size_t i = 0; i < angles.size(); ++i) {
    m.at(i, 0) = static_cast<float>(std::cos(angles[i]));
    m.at(i, 1) = static_cast<float>(std::sin(angles[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("threshold calibration picks the smallest optimal tau") {
  // positives at distances ~0.1 and ~0.2, negative at ~0.9:
  // any tau in (0.2, 0.9] separates perfectly; the sweep must return the
  // smallest candidate above 0.2, which is 0.9 itself... the candidates are
  // the observed distances, so tau = 0.9 predicts d < 0.9 correctly.
  std::vector<double> angles;
  angles.push_back(0.0);
  angles.push_back(std::acos(1.0 - 0.05));  // d(0,1) = 0.1
  angles.push_back(-std::acos(1.0 - 0.10));  // d(0,2) = 0.2
  angles.push_back(std::acos(1.0 - 0.45));  // d(0,3) = 0.9
  Matrix m = circle_points(angles);
  std::vector<std::string> ids{"a", "b", "c", "d"};
  std::vector<corpus::LabeledPair> pairs{
      {"a", "b", true}, {"a", "c", true}, {"a", "d", false}};
  double tau = fbc::calibrate_threshold(m, ids, pairs);
  CHECK(tau == doctest::Approx(0.9).epsilon(1e-6));

  // check the spec walk-through: distances 0.1/0.2 positive, 0.4/0.9 negative
  std::vector<double> angles2;
  angles2.push_back(0.0);
  angles2.push_back(std::acos(1.0 - 0.05));
  angles2.push_back(-std::acos(1.0 - 0.10));
  angles2.push_back(std::acos(1.0 - 0.20));  // d = 0.4
  angles2.push_back(-std::acos(1.0 - 0.45));
  Matrix m2 = circle_points(angles2);
  std::vector<std::string> ids2{"a", "b", "c", "d", "e"};
  std::vector<corpus::LabeledPair> pairs2{{"a", "b", true},
                                          {"a", "c", true},
                                          {"a", "d", false},
                                          {"a", "e", false}};
  double tau2 = fbc::calibrate_threshold(m2, ids2, pairs2);
  CHECK(tau2 == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("calibration accepts everything when all pairs are positive") {
  std::vector<double> angles{0.0, 0.3, 0.8};
  Matrix m = circle_points(angles);
  std::vector<std::string> ids{"a", "b", "c"};
  std::vector<corpus::LabeledPair> pairs{{"a", "b", true}, {"a", "c", true}, {"b", "c", true}};
  double tau = fbc::calibrate_threshold(m, ids, pairs);
  double dmax = 0.0;
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = i + 1; j < 3; ++j)
      dmax = std::max(dmax, fbc::pairwise_distance(m.row_span(i), m.row_span(j)));
  CHECK(tau > dmax);
}

TEST_CASE("calibration requires labeled pairs and known items") {
  Matrix m = circle_points(std::vector<double>{0.0, 0.5});
  std::vector<std::string> ids{"a", "b"};
  CHECK_THROWS_AS(fbc::calibrate_threshold(m, ids, {}), ValidationError);
  std::vector<corpus::LabeledPair> bad{{"a", "zzz", true}};
  CHECK_THROWS_AS(fbc::calibrate_threshold(m, ids, bad), ValidationError);
}

namespace {

fbc::ClusterAssignment run_cluster(std::vector<std::vector<int32_t>> neighborhoods,
                                   std::vector<std::string> ids, fbc::ClusterStrategy strategy) {
  return fbc::cluster(neighborhoods, ids, strategy);
}

std::vector<std::set<std::string>> groups_of(const fbc::ClusterAssignment& a) {
  std::vector<std::set<std::string>> groups(a.n_clusters);
  for (size_t i = 0; i < a.item_ids.size(); ++i) {
    groups[static_cast<size_t>(a.cluster_ids[i])].insert(a.item_ids[i]);
  }
  return groups;
}

}  // namespace

TEST_CASE("clustering: disjoint neighborhoods are their own clusters") {
  // items 0,1 see each other; item 2 is alone
  std::vector<std::vector<int32_t>> nb{{0, 1}, {0, 1}, {2}};
  std::vector<std::string> ids{"i1", "i2", "i3"};
  for (auto strategy :
       {fbc::ClusterStrategy::greedy_leader, fbc::ClusterStrategy::connected_components}) {
    auto a = run_cluster(nb, ids, strategy);
    CHECK(a.n_clusters == 2);
    auto groups = groups_of(a);
    std::set<std::string> g01{"i1", "i2"}, g2{"i3"};
    CHECK((groups[0] == g01 || groups[1] == g01));
    CHECK((groups[0] == g2 || groups[1] == g2));
  }
}

TEST_CASE("clustering: chain where the middle neighborhood is largest") {
  std::vector<std::vector<int32_t>> nb{{0, 1}, {0, 1, 2}, {1, 2}};
  std::vector<std::string> ids{"i1", "i2", "i3"};
  auto greedy = run_cluster(nb, ids, fbc::ClusterStrategy::greedy_leader);
  CHECK(greedy.n_clusters == 1);
  auto comps = run_cluster(nb, ids, fbc::ClusterStrategy::connected_components);
  CHECK(comps.n_clusters == 1);
}

TEST_CASE("clustering: asymmetric chain splits under greedy, merges under components") {
  std::vector<std::vector<int32_t>> nb{{0, 1}, {1, 2}, {2}};
  std::vector<std::string> ids{"i1", "i2", "i3"};
  auto greedy = run_cluster(nb, ids, fbc::ClusterStrategy::greedy_leader);
  CHECK(greedy.n_clusters == 2);
  auto g = groups_of(greedy);
  std::set<std::string> g01{"i1", "i2"}, g2{"i3"};
  CHECK(g[0] == g01);
  CHECK(g[1] == g2);

  auto comps = run_cluster(nb, ids, fbc::ClusterStrategy::connected_components);
  CHECK(comps.n_clusters == 1);
}

TEST_CASE("clustering validates neighborhoods") {
  std::vector<std::string> ids{"i1", "i2"};
  std::vector<std::vector<int32_t>> out_of_range{{0, 5}, {1}};
  CHECK_THROWS_AS(fbc::cluster(out_of_range, ids, fbc::ClusterStrategy::greedy_leader),
                  ValidationError);
  std::vector<std::vector<int32_t>> missing_self{{1}, {1}};
  CHECK_THROWS_WITH_AS(fbc::cluster(missing_self, ids, fbc::ClusterStrategy::greedy_leader),
                       doctest::Contains("i1"), ValidationError);
  std::vector<std::vector<int32_t>> wrong_count{{0}};
  CHECK_THROWS_AS(fbc::cluster(wrong_count, ids, fbc::ClusterStrategy::greedy_leader),
                  ValidationError);
}

TEST_CASE("cluster ids are dense and the partition is total") {
  Rng rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 2 + rng.next_index(40);
    std::vector<std::vector<int32_t>> nb(n);
    for (size_t i = 0; i < n; ++i) {
      nb[i].push_back(static_cast<int32_t>(i));
      size_t extra = rng.next_index(4);
      for (size_t t = 0; t < extra; ++t) nb[i].push_back(static_cast<int32_t>(rng.next_index(n)));
      std::sort(nb[i].begin(), nb[i].end());
      nb[i].erase(std::unique(nb[i].begin(), nb[i].end()), nb[i].end());
    }
    std::vector<std::string> ids;
    for (size_t i = 0; i < n; ++i) ids.push_back("item-" + std::to_string(i));
    for (auto strategy :
         {fbc::ClusterStrategy::greedy_leader, fbc::ClusterStrategy::connected_components}) {
      auto a = fbc::cluster(nb, ids, strategy);
      REQUIRE(a.item_ids.size() == n);
      REQUIRE(a.cluster_ids.size() == n);
      std::set<int32_t> seen(a.cluster_ids.begin(), a.cluster_ids.end());
      CHECK(seen.size() == a.n_clusters);
      CHECK(*seen.begin() == 0);
      CHECK(*seen.rbegin() == static_cast<int32_t>(a.n_clusters) - 1);
    }
  }
}

TEST_CASE("clustering is deterministic") {
  std::vector<std::vector<int32_t>> nb{{0, 1, 2}, {0, 1}, {0, 2, 3}, {2, 3}, {4}};
  std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  auto first = fbc::cluster(nb, ids, fbc::ClusterStrategy::greedy_leader);
  for (int i = 0; i < 5; ++i) {
    auto again = fbc::cluster(nb, ids, fbc::ClusterStrategy::greedy_leader);
    CHECK(again.cluster_ids == first.cluster_ids);
  }
}

TEST_CASE("cluster assignment and meta round trip through files") {
  auto dir = temp_dir();
  fbc::ClusterAssignment a;
  a.item_ids = {"x", "y", "z"};
  a.cluster_ids = {0, 0, 1};
  a.n_clusters = 2;
  fbc::save_clusters(dir / "clusters.jsonl", a);
  auto loaded = fbc::load_clusters(dir / "clusters.jsonl");
  CHECK(loaded.item_ids == a.item_ids);
  CHECK(loaded.cluster_ids == a.cluster_ids);
  CHECK(loaded.n_clusters == 2);

  fbc::ClusterMeta meta;
  meta.n_items = 3;
  meta.n_clusters = 2;
  meta.strategy = "greedy_leader";
  meta.tau = 0.25;
  meta.weights = {0.5, 0.5};
  meta.alpha = 3.0;
  meta.q_max = 100.0;
  meta.index_kind = "exact";
  fbc::save_cluster_meta(dir / "meta.json", meta);
  auto m = fbc::load_cluster_meta(dir / "meta.json");
  CHECK(m.n_items == 3);
  CHECK(m.strategy == "greedy_leader");
  CHECK(m.tau == doctest::Approx(0.25));
  CHECK(m.weights == meta.weights);
}

TEST_CASE("strategy names parse both ways") {
  CHECK(fbc::parse_cluster_strategy("greedy_leader") == fbc::ClusterStrategy::greedy_leader);
  CHECK(fbc::parse_cluster_strategy("connected_components") ==
        fbc::ClusterStrategy::connected_components);
  CHECK_THROWS_AS(fbc::parse_cluster_strategy("k_means"), ConfigError);
  CHECK(fbc::cluster_strategy_name(fbc::ClusterStrategy::greedy_leader) == "greedy_leader");
}
