#include "fitrep/fbc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::fbc {

using nlohmann::json;

namespace {
constexpr double kHalfPi = 1.5707963267948966;
}

double quantity_angle(double q, const QuantityMapParams& params) {
  if (!(params.alpha > 0.0)) throw ConfigError("quantity alpha must be > 0");
  if (!(params.q_max >= 1.0)) throw ConfigError("quantity q_max must be >= 1");
  if (!std::isfinite(q) || q < 1.0) {
    throw ValidationError("quantity must be a finite value >= 1");
  }
  if (q > params.q_max) {
    log_warn("quantity " + std::to_string(q) + " above q_max " + std::to_string(params.q_max) +
             ", clamping");
    q = params.q_max;
  }
  return kHalfPi * (1.0 - std::exp(-params.alpha * (q - 1.0) / params.q_max));
}

FusionWeights normalize_weights(std::span<const double> raw) {
  if (raw.empty()) throw ValidationError("weights must not be empty");
  double sum = 0.0;
  for (double w : raw) {
    if (!std::isfinite(w) || w <= 0.0) throw ValidationError("weights must be finite and > 0");
    sum += w;
  }
  FusionWeights out;
  out.w.reserve(raw.size());
  for (double w : raw) out.w.push_back(w / sum);
  return out;
}

std::vector<float> fuse(std::span<const std::vector<float>> unit_embeddings, double q,
                        const FusionWeights& weights, const QuantityMapParams& params) {
  if (weights.w.size() != unit_embeddings.size() + 1) {
    throw ValidationError("fuse: expected " + std::to_string(unit_embeddings.size() + 1) +
                          " weights, got " + std::to_string(weights.w.size()));
  }
  size_t width = 2;
  for (size_t k = 0; k < unit_embeddings.size(); ++k) {
    const auto& e = unit_embeddings[k];
    if (e.empty()) throw ValidationError("fuse: empty embedding for dimension " + std::to_string(k));
    double nrm = norm(e);
    if (std::fabs(nrm - 1.0) > 1e-4) {
      throw ValidationError("fuse: non-unit embedding for dimension " + std::to_string(k));
    }
    width += e.size();
  }
  std::vector<float> out;
  out.reserve(width);
  for (size_t k = 0; k < unit_embeddings.size(); ++k) {
    double scale = std::sqrt(weights.w[k]);
    for (float v : unit_embeddings[k]) {
      out.push_back(static_cast<float>(scale * static_cast<double>(v)));
    }
  }
  double theta = quantity_angle(q, params);
  double qscale = std::sqrt(weights.w.back());
  out.push_back(static_cast<float>(qscale * std::cos(theta)));
  out.push_back(static_cast<float>(qscale * std::sin(theta)));
  return out;
}

Matrix fuse_all(const encode::VectorStore& embeddings, std::span<const double> quantities,
                const FusionWeights& weights, const QuantityMapParams& params, int threads) {
  embeddings.validate();
  if (quantities.size() != embeddings.ids.size()) {
    throw ValidationError("fuse_all: quantity count does not match row count");
  }
  size_t width = 2;
  for (const auto& m : embeddings.dims) width += m.cols();
  Matrix out(embeddings.ids.size(), width);
  parallel_for(embeddings.ids.size(), threads, [&](size_t i) {
    std::vector<std::vector<float>> per_dim;
    per_dim.reserve(embeddings.dims.size());
    for (const auto& m : embeddings.dims) {
      auto row = m.row_span(i);
      per_dim.emplace_back(row.begin(), row.end());
    }
    auto fused = fuse(per_dim, quantities[i], weights, params);
    std::copy(fused.begin(), fused.end(), out.row(i));
  });
  return out;
}

double pairwise_distance(std::span<const float> a, std::span<const float> b) {
  double d = 2.0 * (1.0 - dot(a, b));
  return std::clamp(d, 0.0, 4.0);
}

namespace {

constexpr char kIndexMagic[4] = {'F', 'B', 'C', 'I'};
constexpr uint32_t kIndexVersion = 1;

void check_query(std::span<const float> query, size_t dim, double tau) {
  if (query.size() != dim) {
    throw ValidationError("range_search: query width " + std::to_string(query.size()) +
                          " does not match index (" + std::to_string(dim) + ")");
  }
  if (!(tau > 0.0)) throw ValidationError("range_search: tau must be > 0");
}

class ExactIndex final : public Index {
 public:
  explicit ExactIndex(Matrix vectors) : vectors_(std::move(vectors)) {
    if (!vectors_.all_finite()) throw ValidationError("index vectors must be finite");
  }

  std::vector<SearchHit> range_search(std::span<const float> query, double tau) const override {
    check_query(query, vectors_.cols(), tau);
    std::vector<SearchHit> hits;
    for (size_t j = 0; j < vectors_.rows(); ++j) {
      double d = pairwise_distance(query, vectors_.row_span(j));
      if (d < tau) hits.push_back({static_cast<int32_t>(j), static_cast<float>(d)});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
      return std::tie(a.distance, a.index) < std::tie(b.distance, b.index);
    });
    return hits;
  }

  size_t size() const override { return vectors_.rows(); }
  size_t dim() const override { return vectors_.cols(); }
  const Matrix& vectors() const override { return vectors_; }

  void save(const std::filesystem::path& path) const override {
    std::string out;
    io::put_bytes(out, kIndexMagic, 4);
    io::put_u32(out, kIndexVersion);
    io::put_u32(out, 0);  // kind: exact
    io::put_u32(out, static_cast<uint32_t>(vectors_.rows()));
    io::put_u32(out, static_cast<uint32_t>(vectors_.cols()));
    io::put_bytes(out, vectors_.data().data(), vectors_.data().size() * sizeof(float));
    io::atomic_write_file(path, out);
  }

 private:
  Matrix vectors_;
};

class IvfIndex final : public Index {
 public:
  IvfIndex(Matrix vectors, IvfParams params, std::vector<double> centroids,
           std::vector<std::vector<int32_t>> lists)
      : vectors_(std::move(vectors)),
        params_(params),
        centroids_(std::move(centroids)),
        lists_(std::move(lists)) {}

  std::vector<SearchHit> range_search(std::span<const float> query, double tau) const override {
    check_query(query, vectors_.cols(), tau);
    const size_t nlist = lists_.size();
    const size_t dim = vectors_.cols();
    std::vector<std::pair<double, size_t>> order;
    order.reserve(nlist);
    for (size_t c = 0; c < nlist; ++c) {
      const double* cent = centroids_.data() + c * dim;
      double acc = 0.0;
      for (size_t j = 0; j < dim; ++j) {
        double diff = static_cast<double>(query[j]) - cent[j];
        acc += diff * diff;
      }
      order.emplace_back(acc, c);
    }
    size_t probes = std::min<size_t>(static_cast<size_t>(params_.nprobe), nlist);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(probes), order.end());
    std::vector<SearchHit> hits;
    for (size_t p = 0; p < probes; ++p) {
      for (int32_t row : lists_[order[p].second]) {
        double d = pairwise_distance(query, vectors_.row_span(static_cast<size_t>(row)));
        if (d < tau) hits.push_back({row, static_cast<float>(d)});
      }
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
      return std::tie(a.distance, a.index) < std::tie(b.distance, b.index);
    });
    return hits;
  }

  size_t size() const override { return vectors_.rows(); }
  size_t dim() const override { return vectors_.cols(); }
  const Matrix& vectors() const override { return vectors_; }

  void save(const std::filesystem::path& path) const override {
    std::string out;
    io::put_bytes(out, kIndexMagic, 4);
    io::put_u32(out, kIndexVersion);
    io::put_u32(out, 1);  // kind: ivf
    io::put_u32(out, static_cast<uint32_t>(vectors_.rows()));
    io::put_u32(out, static_cast<uint32_t>(vectors_.cols()));
    io::put_bytes(out, vectors_.data().data(), vectors_.data().size() * sizeof(float));
    io::put_u32(out, static_cast<uint32_t>(lists_.size()));
    io::put_u32(out, static_cast<uint32_t>(params_.nprobe));
    io::put_u64(out, params_.seed);
    io::put_u32(out, static_cast<uint32_t>(params_.kmeans_iters));
    io::put_bytes(out, centroids_.data(), centroids_.size() * sizeof(double));
    for (const auto& list : lists_) {
      io::put_u32(out, static_cast<uint32_t>(list.size()));
      io::put_bytes(out, list.data(), list.size() * sizeof(int32_t));
    }
    io::atomic_write_file(path, out);
  }

 private:
  Matrix vectors_;
  IvfParams params_;
  std::vector<double> centroids_;  // nlist x dim
  std::vector<std::vector<int32_t>> lists_;
};

double sq_dist_to_centroid(const Matrix& x, size_t row, const double* cent) {
  const float* r = x.row(row);
  double acc = 0.0;
  for (size_t j = 0; j < x.cols(); ++j) {
    double diff = static_cast<double>(r[j]) - cent[j];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

std::unique_ptr<Index> build_exact_index(Matrix vectors) {
  return std::make_unique<ExactIndex>(std::move(vectors));
}

std::unique_ptr<Index> build_ivf_index(Matrix vectors, const IvfParams& params) {
  const size_t n = vectors.rows();
  const size_t dim = vectors.cols();
  if (params.nlist < 1) throw ConfigError("nlist must be >= 1");
  if (params.nprobe < 1) throw ConfigError("nprobe must be >= 1");
  if (n < static_cast<size_t>(params.nlist)) {
    throw ValidationError("ivf: need at least nlist vectors (" + std::to_string(n) + " < " +
                          std::to_string(params.nlist) + ")");
  }
  if (!vectors.all_finite()) throw ValidationError("index vectors must be finite");

  const size_t nlist = static_cast<size_t>(params.nlist);
  Rng rng(params.seed);
  std::vector<double> centroids(nlist * dim, 0.0);

  // k-means++ seeding.
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  size_t first = rng.next_index(n);
  for (size_t j = 0; j < dim; ++j) centroids[j] = vectors.at(first, j);
  for (size_t c = 1; c < nlist; ++c) {
    const double* prev = centroids.data() + (c - 1) * dim;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      min_sq[i] = std::min(min_sq[i], sq_dist_to_centroid(vectors, i, prev));
      total += min_sq[i];
    }
    size_t chosen;
    if (total <= 0.0) {
      chosen = rng.next_index(n);
    } else {
      double r = rng.next_double() * total;
      double cum = 0.0;
      chosen = n - 1;
      for (size_t i = 0; i < n; ++i) {
        cum += min_sq[i];
        if (cum >= r) {
          chosen = i;
          break;
        }
      }
    }
    for (size_t j = 0; j < dim; ++j) centroids[c * dim + j] = vectors.at(chosen, j);
  }

  // Lloyd iterations with deterministic empty-list repair.
  std::vector<int32_t> assign(n, 0);
  for (int iter = 0; iter < params.kmeans_iters; ++iter) {
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int32_t best_c = 0;
      for (size_t c = 0; c < nlist; ++c) {
        double d = sq_dist_to_centroid(vectors, i, centroids.data() + c * dim);
        if (d < best) {
          best = d;
          best_c = static_cast<int32_t>(c);
        }
      }
      assign[i] = best_c;
    }
    std::vector<double> sums(nlist * dim, 0.0);
    std::vector<size_t> counts(nlist, 0);
    for (size_t i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<size_t>(assign[i]) * dim;
      const float* r = vectors.row(i);
      for (size_t j = 0; j < dim; ++j) s[j] += r[j];
      ++counts[static_cast<size_t>(assign[i])];
    }
    for (size_t c = 0; c < nlist; ++c) {
      if (counts[c] == 0) {
        // Promote the point farthest from its centroid, preferring the lower
        // row index on ties, then rebalance on the next iteration.
        double far_d = -1.0;
        size_t far_i = 0;
        for (size_t i = 0; i < n; ++i) {
          if (counts[static_cast<size_t>(assign[i])] <= 1) continue;
          double d = sq_dist_to_centroid(vectors, i,
                                         centroids.data() + static_cast<size_t>(assign[i]) * dim);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        --counts[static_cast<size_t>(assign[far_i])];
        double* s_old = sums.data() + static_cast<size_t>(assign[far_i]) * dim;
        const float* r = vectors.row(far_i);
        for (size_t j = 0; j < dim; ++j) s_old[j] -= r[j];
        assign[far_i] = static_cast<int32_t>(c);
        counts[c] = 1;
        double* s_new = sums.data() + c * dim;
        for (size_t j = 0; j < dim; ++j) s_new[j] = r[j];
      }
    }
    for (size_t c = 0; c < nlist; ++c) {
      double* cent = centroids.data() + c * dim;
      const double* s = sums.data() + c * dim;
      for (size_t j = 0; j < dim; ++j) cent[j] = s[j] / static_cast<double>(counts[c]);
    }
  }

  // Final assignment into inverted lists.
  std::vector<std::vector<int32_t>> lists(nlist);
  for (size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    size_t best_c = 0;
    for (size_t c = 0; c < nlist; ++c) {
      double d = sq_dist_to_centroid(vectors, i, centroids.data() + c * dim);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    lists[best_c].push_back(static_cast<int32_t>(i));
  }
  return std::make_unique<IvfIndex>(std::move(vectors), params, std::move(centroids),
                                    std::move(lists));
}

std::unique_ptr<Index> load_index(const std::filesystem::path& path) {
  std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic(kIndexMagic);
  uint32_t version = r.get_u32();
  if (version != kIndexVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  uint32_t kind = r.get_u32();
  uint32_t rows = r.get_u32();
  uint32_t cols = r.get_u32();
  std::vector<float> data(static_cast<size_t>(rows) * cols);
  r.get_bytes(data.data(), data.size() * sizeof(float));
  Matrix vectors(rows, cols, std::move(data));
  if (kind == 0) {
    r.expect_end();
    return std::make_unique<ExactIndex>(std::move(vectors));
  }
  if (kind != 1) throw FormatError(path.string() + ": unknown index kind");
  IvfParams params;
  uint32_t nlist = r.get_u32();
  params.nlist = static_cast<int>(nlist);
  params.nprobe = static_cast<int>(r.get_u32());
  params.seed = r.get_u64();
  params.kmeans_iters = static_cast<int>(r.get_u32());
  std::vector<double> centroids(static_cast<size_t>(nlist) * cols);
  r.get_bytes(centroids.data(), centroids.size() * sizeof(double));
  std::vector<std::vector<int32_t>> lists(nlist);
  size_t total = 0;
  for (uint32_t c = 0; c < nlist; ++c) {
    uint32_t len = r.get_u32();
    lists[c].resize(len);
    r.get_bytes(lists[c].data(), len * sizeof(int32_t));
    total += len;
    for (int32_t idx : lists[c]) {
      if (idx < 0 || static_cast<uint32_t>(idx) >= rows) {
        throw FormatError(path.string() + ": list entry out of range");
      }
    }
  }
  r.expect_end();
  if (total != rows) throw FormatError(path.string() + ": list sizes do not cover all rows");
  return std::make_unique<IvfIndex>(std::move(vectors), params, std::move(centroids),
                                    std::move(lists));
}

double calibrate_threshold(const Matrix& fused, std::span<const std::string> ids,
                           std::span<const corpus::LabeledPair> pairs) {
  if (pairs.empty()) throw ValidationError("calibrate_threshold: empty labeled set");
  if (fused.rows() != ids.size()) {
    throw ValidationError("calibrate_threshold: ids do not match fused rows");
  }
  std::unordered_map<std::string, size_t> row_of;
  row_of.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) row_of.emplace(ids[i], i);

  struct Scored {
    double distance;
    bool is_duplicate;
  };
  std::vector<Scored> scored;
  scored.reserve(pairs.size());
  size_t total_pos = 0;
  for (const auto& p : pairs) {
    auto a = row_of.find(p.item_a);
    auto b = row_of.find(p.item_b);
    if (a == row_of.end()) throw ValidationError("unknown item in labeled pair: " + p.item_a);
    if (b == row_of.end()) throw ValidationError("unknown item in labeled pair: " + p.item_b);
    scored.push_back(
        {pairwise_distance(fused.row_span(a->second), fused.row_span(b->second)), p.is_duplicate});
    if (p.is_duplicate) ++total_pos;
  }
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) { return a.distance < b.distance; });

  auto f1_at = [&](size_t n_pred, size_t tp) {
    if (tp == 0) return 0.0;
    double fp = static_cast<double>(n_pred - tp);
    double fn = static_cast<double>(total_pos - tp);
    return 2.0 * static_cast<double>(tp) / (2.0 * static_cast<double>(tp) + fp + fn);
  };

  double best_tau = scored.front().distance;
  double best_f1 = -1.0;
  size_t tp_prefix = 0;
  for (size_t i = 0; i < scored.size(); ++i) {
    // Candidate tau at each distinct distance predicts everything strictly
    // closer as duplicate.
    if (i == 0 || scored[i].distance != scored[i - 1].distance) {
      double f1 = f1_at(i, tp_prefix);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_tau = scored[i].distance;
      }
    }
    if (scored[i].is_duplicate) ++tp_prefix;
  }
  double final_tau = scored.back().distance + 1e-9;
  double f1 = f1_at(scored.size(), tp_prefix);
  if (f1 > best_f1) {
    best_f1 = f1;
    best_tau = final_tau;
  }
  return best_tau;
}

ClusterStrategy parse_cluster_strategy(std::string_view name) {
  if (name == "greedy_leader") return ClusterStrategy::greedy_leader;
  if (name == "connected_components") return ClusterStrategy::connected_components;
  throw ConfigError("unknown cluster strategy: " + std::string(name));
}

std::string cluster_strategy_name(ClusterStrategy s) {
  return s == ClusterStrategy::greedy_leader ? "greedy_leader" : "connected_components";
}

namespace {

struct UnionFind {
  std::vector<int32_t> parent;
  explicit UnionFind(size_t n) : parent(n) {
    for (size_t i = 0; i < n; ++i) parent[i] = static_cast<int32_t>(i);
  }
  int32_t find(int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

}  // namespace

ClusterAssignment cluster(std::span<const std::vector<int32_t>> neighborhoods,
                          std::span<const std::string> item_ids, ClusterStrategy strategy) {
  const size_t n = item_ids.size();
  if (neighborhoods.size() != n) {
    throw ValidationError("cluster: neighborhood count does not match item count");
  }
  for (size_t i = 0; i < n; ++i) {
    bool has_self = false;
    for (int32_t j : neighborhoods[i]) {
      if (j < 0 || static_cast<size_t>(j) >= n) {
        throw ValidationError("cluster: neighborhood of '" + item_ids[i] +
                              "' references unknown item index " + std::to_string(j));
      }
      has_self = has_self || static_cast<size_t>(j) == i;
    }
    if (!has_self) {
      throw ValidationError("cluster: neighborhood of '" + item_ids[i] +
                            "' does not contain the item itself");
    }
  }

  ClusterAssignment out;
  out.item_ids.assign(item_ids.begin(), item_ids.end());
  out.cluster_ids.assign(n, -1);

  if (strategy == ClusterStrategy::greedy_leader) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (neighborhoods[a].size() != neighborhoods[b].size()) {
        return neighborhoods[a].size() > neighborhoods[b].size();
      }
      return item_ids[a] < item_ids[b];
    });
    int32_t next_id = 0;
    for (size_t i : order) {
      if (out.cluster_ids[i] >= 0) continue;  // claimed members cannot lead
      int32_t cid = next_id++;
      for (int32_t j : neighborhoods[i]) {
        if (out.cluster_ids[static_cast<size_t>(j)] < 0) {
          out.cluster_ids[static_cast<size_t>(j)] = cid;
        }
      }
      out.cluster_ids[i] = cid;
    }
    out.n_clusters = static_cast<size_t>(next_id);
    return out;
  }

  UnionFind uf(n);
  for (size_t i = 0; i < n; ++i) {
    for (int32_t j : neighborhoods[i]) uf.unite(static_cast<int32_t>(i), j);
  }
  // Dense ids in discovery order, scanning items by ascending item_id.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return item_ids[a] < item_ids[b]; });
  std::unordered_map<int32_t, int32_t> dense;
  int32_t next_id = 0;
  for (size_t i : order) {
    int32_t root = uf.find(static_cast<int32_t>(i));
    auto [it, inserted] = dense.emplace(root, next_id);
    if (inserted) ++next_id;
    out.cluster_ids[i] = it->second;
  }
  out.n_clusters = static_cast<size_t>(next_id);
  return out;
}

std::unordered_map<std::string, int32_t> cluster_lookup(const ClusterAssignment& assignment) {
  std::unordered_map<std::string, int32_t> map;
  map.reserve(assignment.item_ids.size());
  for (size_t i = 0; i < assignment.item_ids.size(); ++i) {
    if (!map.emplace(assignment.item_ids[i], assignment.cluster_ids[i]).second) {
      throw ValidationError("duplicate item in cluster assignment: " + assignment.item_ids[i]);
    }
  }
  return map;
}

void save_clusters(const std::filesystem::path& path, const ClusterAssignment& assignment) {
  if (assignment.item_ids.size() != assignment.cluster_ids.size()) {
    throw ValidationError("cluster assignment shape mismatch");
  }
  std::string out;
  for (size_t i = 0; i < assignment.item_ids.size(); ++i) {
    json j;
    j["item_id"] = assignment.item_ids[i];
    j["cluster_id"] = assignment.cluster_ids[i];
    out += j.dump();
    out += "\n";
  }
  io::atomic_write_file(path, out);
}

ClusterAssignment load_clusters(const std::filesystem::path& path) {
  ClusterAssignment out;
  int32_t max_id = -1;
  io::for_each_line(path, [&](size_t line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("item_id") || !j.contains("cluster_id") || !j["item_id"].is_string() ||
        !j["cluster_id"].is_number_integer()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected item_id, cluster_id");
    }
    out.item_ids.push_back(j["item_id"].get<std::string>());
    int32_t cid = j["cluster_id"].get<int32_t>();
    if (cid < 0) throw ValidationError("line " + std::to_string(line_no) + ": negative cluster_id");
    out.cluster_ids.push_back(cid);
    max_id = std::max(max_id, cid);
  });
  out.n_clusters = static_cast<size_t>(max_id + 1);
  return out;
}

void save_cluster_meta(const std::filesystem::path& path, const ClusterMeta& meta) {
  json j;
  j["n_items"] = meta.n_items;
  j["n_clusters"] = meta.n_clusters;
  j["strategy"] = meta.strategy;
  j["tau"] = meta.tau;
  j["weights"] = meta.weights;
  j["alpha"] = meta.alpha;
  j["q_max"] = meta.q_max;
  j["index_kind"] = meta.index_kind;
  io::atomic_write_file(path, j.dump(2) + "\n");
}

ClusterMeta load_cluster_meta(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("cluster meta " + path.string() + ": " + e.what());
  }
  ClusterMeta meta;
  meta.n_items = j.value("n_items", size_t{0});
  meta.n_clusters = j.value("n_clusters", size_t{0});
  meta.strategy = j.value("strategy", std::string{});
  meta.tau = j.value("tau", 0.0);
  if (j.contains("weights")) meta.weights = j["weights"].get<std::vector<double>>();
  meta.alpha = j.value("alpha", 0.0);
  meta.q_max = j.value("q_max", 0.0);
  meta.index_kind = j.value("index_kind", std::string{});
  return meta;
}

}  // namespace fitrep::fbc
