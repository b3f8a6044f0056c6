#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fitrep/matrix.hpp"

namespace fitrep::spdr {

// How the per-dimension output width is chosen: a fixed width, or the
// smallest width whose cumulative explained variance ratio reaches the
// threshold (then clamped to [min_dim, max_dim]).
struct TargetDimPolicy {
  enum class Mode { fixed, adaptive };
  Mode mode = Mode::adaptive;
  int fixed_dim = 8;
  double evr_threshold = 0.90;
  int min_dim = 2;
  int max_dim = 32;
};

struct UmapParams {
  int n_neighbors = 15;
  double min_dist = 0.1;
  int n_epochs = 200;
  int negative_sample_rate = 5;
  double learning_rate = 1.0;  // decays linearly to zero over the epochs
  uint64_t seed = 42;
  TargetDimPolicy target_dim;
  // 1 keeps the layout phase bit-reproducible. More threads shard the edge
  // list and update the layout concurrently, which is faster but gives up
  // run-to-run identical output.
  int n_threads = 1;

  void validate() const;
};

// Exact brute-force k nearest neighbours under Euclidean distance, self
// excluded, ties broken toward the lower row index.
struct KnnResult {
  int n = 0;
  int k = 0;
  std::vector<int32_t> indices;  // n*k
  std::vector<float> distances;  // n*k, ascending within a row

  std::span<const int32_t> row_indices(size_t i) const {
    return {indices.data() + i * static_cast<size_t>(k), static_cast<size_t>(k)};
  }
  std::span<const float> row_distances(size_t i) const {
    return {distances.data() + i * static_cast<size_t>(k), static_cast<size_t>(k)};
  }
};
KnnResult knn_graph(const Matrix& x, int k, int threads = 1);

// Local connectivity calibration for one point. rho is the distance to the
// nearest distinct neighbour; sigma solves
//   sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)
// by bisection (tolerance 1e-5, at most 64 halvings), floored at 1e-3 times
// the mean neighbour distance (fallback_mean when the row mean is zero).
struct SmoothKnn {
  double rho = 0.0;
  double sigma = 0.0;
};
SmoothKnn smooth_knn(std::span<const float> distances, double fallback_mean = 0.0);

// Probabilistic t-conorm used to symmetrize directed memberships.
inline double fuzzy_combine(double a, double b) { return a + b - a * b; }

struct FuzzyEdge {
  int32_t u = 0;
  int32_t v = 0;  // u < v
  float weight = 0.0f;
};
struct FuzzyGraph {
  int n = 0;
  std::vector<FuzzyEdge> edges;  // sorted by (u, v), weights in (0, 1]
  std::vector<double> rho;
  std::vector<double> sigma;
};
FuzzyGraph fuzzy_union(const KnnResult& knn, int threads = 1);

// Coefficients of the low-dimensional membership curve 1/(1 + a t^(2b)),
// least-squares fitted against the min_dist plateau-then-decay target on
// 300 points spanning [0, 3].
struct Curve {
  double a = 0.0;
  double b = 0.0;
};
Curve fit_curve(double min_dist);
double curve_value(const Curve& c, double t);

struct PcaModel {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> mean;                      // in_dim
  std::vector<double> components;                // out_dim x in_dim
  std::vector<double> explained_variance_ratio;  // all available components
};
// Centered SVD principal components. Component signs are fixed so the
// largest-magnitude loading of each component is positive, making refits
// deterministic. out_dim is silently capped at min(rows, cols).
std::pair<Matrix, PcaModel> fit_pca(const Matrix& x, int out_dim);
Matrix pca_transform(const PcaModel& model, const Matrix& x);

int select_target_dim(const Matrix& x, const TargetDimPolicy& policy);

struct SpdrModel {
  UmapParams params;
  int out_dim = 0;
  Curve curve;
  Matrix train_input;
  Matrix train_embedding;
};

// Neighbourhood-preserving layout: fuzzy graph construction followed by
// stochastic gradient refinement of a scaled PCA initialization.
std::pair<Matrix, SpdrModel> fit_umap(const Matrix& x, const UmapParams& params);

// Out-of-sample placement with the trained layout frozen: membership
// weighted average of the neighbours' embeddings (rows that exactly match a
// training row collapse onto it), then 20 deterministic attraction-only
// refinement steps.
Matrix transform(const SpdrModel& model, const Matrix& x);

// Row-wise L2 normalization; throws on an (effectively) zero row.
Matrix l2_normalize(const Matrix& x);

enum class Method { umap, pca };

struct ModelEntry {
  Method method = Method::umap;
  SpdrModel umap;
  PcaModel pca;
};
Matrix transform_entry(const ModelEntry& entry, const Matrix& x);

// One trained reducer per textual concept dimension, persisted together.
struct ModelSet {
  std::vector<std::string> dim_names;
  std::vector<ModelEntry> models;

  void save(const std::filesystem::path& path) const;
  static ModelSet load(const std::filesystem::path& path);
};

}  // namespace fitrep::spdr
