#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fitrep/corpus.hpp"
#include "fitrep/encode.hpp"
#include "fitrep/matrix.hpp"

namespace fitrep::fbc {

struct QuantityMapParams {
  double alpha = 3.0;
  double q_max = 100.0;
};

// Saturating map from a quantity to an angle in [0, pi/2):
//   theta(q) = (pi/2) * (1 - exp(-alpha * (q - 1) / q_max))
// q = 1 maps to exactly 0; q > q_max is clamped (with a warning) so the
// angle never exceeds theta(q_max).
double quantity_angle(double q, const QuantityMapParams& params);

// Normalizes nonnegative per-dimension weights to sum to 1.
struct FusionWeights {
  std::vector<double> w;
};
FusionWeights normalize_weights(std::span<const double> raw);

// Concatenates sqrt(w_k)-scaled unit embeddings with the quantity encoded as
// sqrt(w_D) * (cos theta, sin theta). The result is a unit vector, so the
// squared Euclidean distance between two fused vectors decomposes into
// per-dimension contributions.
std::vector<float> fuse(std::span<const std::vector<float>> unit_embeddings, double q,
                        const FusionWeights& weights, const QuantityMapParams& params);

// Row-parallel fuse over a store of per-dimension unit embeddings.
Matrix fuse_all(const encode::VectorStore& embeddings, std::span<const double> quantities,
                const FusionWeights& weights, const QuantityMapParams& params, int threads = 1);

// Distance between two fused unit vectors: 2 * (1 - a.b), clamped to [0, 4].
double pairwise_distance(std::span<const float> a, std::span<const float> b);

struct SearchHit {
  int32_t index = 0;
  float distance = 0.0f;
  bool operator==(const SearchHit&) const = default;
};

// Range search structure over fused vectors. Hits are every stored row with
// distance strictly below tau, sorted by (distance, index).
class Index {
 public:
  virtual ~Index() = default;
  virtual std::vector<SearchHit> range_search(std::span<const float> query, double tau) const = 0;
  virtual size_t size() const = 0;
  virtual size_t dim() const = 0;
  virtual const Matrix& vectors() const = 0;
  virtual void save(const std::filesystem::path& path) const = 0;
};

std::unique_ptr<Index> build_exact_index(Matrix vectors);

struct IvfParams {
  int nlist = 100;
  int nprobe = 8;
  uint64_t seed = 42;
  int kmeans_iters = 25;
};

// Inverted-file index: k-means++ coarse quantizer, candidate lists from the
// nprobe nearest centroids. Approximate; misses whatever lives outside the
// probed cells.
std::unique_ptr<Index> build_ivf_index(Matrix vectors, const IvfParams& params);

std::unique_ptr<Index> load_index(const std::filesystem::path& path);

// Picks the distance threshold maximizing F1 over the labeled pairs
// (prediction: distance < tau). Candidates are the distinct observed
// distances plus one value just above the largest; ties prefer smaller tau.
double calibrate_threshold(const Matrix& fused, std::span<const std::string> ids,
                           std::span<const corpus::LabeledPair> pairs);

enum class ClusterStrategy { greedy_leader, connected_components };
ClusterStrategy parse_cluster_strategy(std::string_view name);
std::string cluster_strategy_name(ClusterStrategy s);

struct ClusterAssignment {
  std::vector<std::string> item_ids;
  std::vector<int32_t> cluster_ids;  // parallel to item_ids, dense from 0
  size_t n_clusters = 0;
};

std::unordered_map<std::string, int32_t> cluster_lookup(const ClusterAssignment& assignment);

// Turns per-item range-search neighborhoods (row indices, self included)
// into a partition. greedy_leader scans neighborhoods largest first (ties:
// lexicographically smaller leader id) and claims unassigned members;
// connected_components unions every neighborhood.
ClusterAssignment cluster(std::span<const std::vector<int32_t>> neighborhoods,
                          std::span<const std::string> item_ids, ClusterStrategy strategy);

struct ClusterMeta {
  size_t n_items = 0;
  size_t n_clusters = 0;
  std::string strategy;
  double tau = 0.0;
  std::vector<double> weights;
  double alpha = 0.0;
  double q_max = 0.0;
  std::string index_kind;
};

void save_clusters(const std::filesystem::path& path, const ClusterAssignment& assignment);
ClusterAssignment load_clusters(const std::filesystem::path& path);
void save_cluster_meta(const std::filesystem::path& path, const ClusterMeta& meta);
ClusterMeta load_cluster_meta(const std::filesystem::path& path);

}  // namespace fitrep::fbc
