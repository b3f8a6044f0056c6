#include "fitrep/spdr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <tuple>

#include <Eigen/Dense>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/log.hpp"
#include "fitrep/parallel.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::spdr {

void UmapParams::validate() const {
  if (n_neighbors < 2) throw ConfigError("n_neighbors must be >= 2");
  if (!(min_dist > 0.0) || !(min_dist < 2.0)) throw ConfigError("min_dist must be in (0, 2)");
  if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
  if (negative_sample_rate < 1) throw ConfigError("negative_sample_rate must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (n_threads < 1) throw ConfigError("n_threads must be >= 1");
  if (target_dim.mode == TargetDimPolicy::Mode::fixed && target_dim.fixed_dim < 1) {
    throw ConfigError("fixed target dim must be >= 1");
  }
  if (target_dim.mode == TargetDimPolicy::Mode::adaptive &&
      (!(target_dim.evr_threshold > 0.0) || target_dim.evr_threshold > 1.0)) {
    throw ConfigError("evr_threshold must be in (0, 1]");
  }
}

KnnResult knn_graph(const Matrix& x, int k, int threads) {
  const size_t n = x.rows();
  if (k < 1) throw ValidationError("knn_graph: k must be >= 1");
  if (n <= static_cast<size_t>(k)) {
    throw ValidationError("knn_graph: need more than k rows (" + std::to_string(n) + " <= " +
                          std::to_string(k) + ")");
  }
  if (!x.all_finite()) throw ValidationError("knn_graph: non-finite input");

  KnnResult result;
  result.n = static_cast<int>(n);
  result.k = k;
  result.indices.resize(n * static_cast<size_t>(k));
  result.distances.resize(n * static_cast<size_t>(k));

  parallel_for(n, threads, [&](size_t i) {
    std::vector<std::pair<float, int32_t>> cand;
    cand.reserve(n - 1);
    auto xi = x.row_span(i);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back(static_cast<float>(euclidean_distance(xi, x.row_span(j))),
                        static_cast<int32_t>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int c = 0; c < k; ++c) {
      result.indices[i * k + c] = cand[c].second;
      result.distances[i * k + c] = cand[c].first;
    }
  });
  return result;
}

SmoothKnn smooth_knn(std::span<const float> distances, double fallback_mean) {
  if (distances.empty()) throw ValidationError("smooth_knn: empty distance profile");
  const size_t k = distances.size();
  const double target = std::log2(static_cast<double>(k));

  SmoothKnn out;
  out.rho = 0.0;
  for (float d : distances) {
    if (d > 0.0f) {
      out.rho = d;
      break;
    }
  }

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double mid = 1.0;
  for (int iter = 0; iter < 64; ++iter) {
    double psum = 0.0;
    for (float dval : distances) {
      double d = static_cast<double>(dval) - out.rho;
      psum += d > 0.0 ? std::exp(-d / mid) : 1.0;
    }
    if (std::fabs(psum - target) < 1e-5) break;
    if (psum > target) {
      hi = mid;
      mid = (lo + hi) / 2.0;
    } else {
      lo = mid;
      mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
    }
  }
  out.sigma = mid;

  double mean = 0.0;
  for (float d : distances) mean += d;
  mean /= static_cast<double>(k);
  double scale = mean > 0.0 ? mean : fallback_mean;
  double floor = scale > 0.0 ? 1e-3 * scale : 1e-3;
  if (out.sigma < floor) out.sigma = floor;
  return out;
}

FuzzyGraph fuzzy_union(const KnnResult& knn, int threads) {
  const size_t n = static_cast<size_t>(knn.n);
  const size_t k = static_cast<size_t>(knn.k);
  FuzzyGraph graph;
  graph.n = knn.n;
  graph.rho.resize(n);
  graph.sigma.resize(n);

  double all_mean = 0.0;
  for (float d : knn.distances) all_mean += d;
  all_mean /= static_cast<double>(knn.distances.size());

  parallel_for(n, threads, [&](size_t i) {
    auto sk = smooth_knn(knn.row_distances(i), all_mean);
    graph.rho[i] = sk.rho;
    graph.sigma[i] = sk.sigma;
  });

  struct Directed {
    int32_t u, v;
    float w;
  };
  std::vector<Directed> directed;
  directed.reserve(n * k);
  for (size_t i = 0; i < n; ++i) {
    auto idx = knn.row_indices(i);
    auto dst = knn.row_distances(i);
    for (size_t c = 0; c < k; ++c) {
      double d = static_cast<double>(dst[c]) - graph.rho[i];
      double mu = d > 0.0 ? std::exp(-d / graph.sigma[i]) : 1.0;
      int32_t a = static_cast<int32_t>(i);
      int32_t b = idx[c];
      directed.push_back({std::min(a, b), std::max(a, b), static_cast<float>(mu)});
    }
  }
  std::sort(directed.begin(), directed.end(), [](const Directed& a, const Directed& b) {
    return std::tie(a.u, a.v) < std::tie(b.u, b.v);
  });
  for (size_t i = 0; i < directed.size();) {
    size_t j = i;
    double combined = 0.0;
    while (j < directed.size() && directed[j].u == directed[i].u && directed[j].v == directed[i].v) {
      combined = fuzzy_combine(combined, directed[j].w);
      ++j;
    }
    graph.edges.push_back({directed[i].u, directed[i].v, static_cast<float>(combined)});
    i = j;
  }
  return graph;
}

Curve fit_curve(double min_dist) {
  if (!(min_dist > 0.0) || !(min_dist < 2.0)) {
    throw ValidationError("fit_curve: min_dist must be in (0, 2)");
  }
  constexpr int kGrid = 300;
  constexpr double kSpan = 3.0;
  std::vector<double> t(kGrid), y(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    t[i] = kSpan * static_cast<double>(i) / (kGrid - 1);
    y[i] = t[i] <= min_dist ? 1.0 : std::exp(-(t[i] - min_dist));
  }

  // Levenberg-Marquardt on the two-parameter least squares problem.
  double a = 1.0, b = 1.0;
  double lambda = 1e-3;
  auto cost_of = [&](double ca, double cb) {
    double c = 0.0;
    for (int i = 0; i < kGrid; ++i) {
      double u = std::pow(t[i], 2.0 * cb);
      double r = 1.0 / (1.0 + ca * u) - y[i];
      c += r * r;
    }
    return c;
  };
  double cost = cost_of(a, b);
  for (int iter = 0; iter < 200; ++iter) {
    double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
    for (int i = 0; i < kGrid; ++i) {
      double u = std::pow(t[i], 2.0 * b);
      double denom = 1.0 + a * u;
      double psi = 1.0 / denom;
      double r = psi - y[i];
      double da = -u / (denom * denom);
      double db = t[i] > 0.0 ? -2.0 * a * u * std::log(t[i]) / (denom * denom) : 0.0;
      jtj00 += da * da;
      jtj01 += da * db;
      jtj11 += db * db;
      jtr0 += da * r;
      jtr1 += db * r;
    }
    bool stepped = false;
    for (int tries = 0; tries < 32; ++tries) {
      double m00 = jtj00 + lambda * jtj00;
      double m11 = jtj11 + lambda * jtj11;
      double m01 = jtj01;
      double det = m00 * m11 - m01 * m01;
      if (std::fabs(det) < 1e-300) {
        lambda *= 10.0;
        continue;
      }
      double step_a = (-jtr0 * m11 + jtr1 * m01) / det;
      double step_b = (jtr0 * m01 - jtr1 * m00) / det;
      double na = a + step_a;
      double nb = b + step_b;
      if (na > 0.0 && nb > 0.0) {
        double nc = cost_of(na, nb);
        if (nc < cost) {
          if (cost - nc < 1e-14) {
            a = na;
            b = nb;
            return {a, b};
          }
          a = na;
          b = nb;
          cost = nc;
          lambda = std::max(lambda * 0.3, 1e-12);
          stepped = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }
  return {a, b};
}

double curve_value(const Curve& c, double t) { return 1.0 / (1.0 + c.a * std::pow(t, 2.0 * c.b)); }

namespace {

Eigen::MatrixXd to_eigen(const Matrix& x) {
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (size_t i = 0; i < x.rows(); ++i) {
    for (size_t j = 0; j < x.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x.at(i, j);
  }
  return m;
}

struct SvdSummary {
  std::vector<double> singular_values;
  Eigen::MatrixXd v;  // cols x n_components
  std::vector<double> mean;
};

SvdSummary centered_svd(const Matrix& x) {
  if (x.rows() < 1 || x.cols() < 1) throw ValidationError("svd: empty input");
  if (!x.all_finite()) throw ValidationError("svd: non-finite input");
  Eigen::MatrixXd m = to_eigen(x);
  Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdSummary out;
  out.v = svd.matrixV();
  out.singular_values.assign(svd.singularValues().data(),
                             svd.singularValues().data() + svd.singularValues().size());
  out.mean.assign(mean.data(), mean.data() + mean.size());
  return out;
}

}  // namespace

std::pair<Matrix, PcaModel> fit_pca(const Matrix& x, int out_dim) {
  if (out_dim < 1) throw ValidationError("fit_pca: out_dim must be >= 1");
  SvdSummary svd = centered_svd(x);
  const int avail = static_cast<int>(svd.singular_values.size());
  const int d = std::min(out_dim, avail);
  if (d < out_dim) {
    log_warn("fit_pca: requested " + std::to_string(out_dim) + " components, data supports " +
             std::to_string(d));
  }

  PcaModel model;
  model.in_dim = static_cast<int>(x.cols());
  model.out_dim = d;
  model.mean = svd.mean;
  model.components.resize(static_cast<size_t>(d) * x.cols());
  for (int c = 0; c < d; ++c) {
    // Deterministic orientation: the loading with the largest magnitude
    // (first such index on ties) is made positive.
    int pivot = 0;
    double best = -1.0;
    for (int j = 0; j < model.in_dim; ++j) {
      double mag = std::fabs(svd.v(j, c));
      if (mag > best) {
        best = mag;
        pivot = j;
      }
    }
    double sign = svd.v(pivot, c) < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < model.in_dim; ++j) {
      model.components[static_cast<size_t>(c) * model.in_dim + j] = sign * svd.v(j, c);
    }
  }
  double total = 0.0;
  for (double s : svd.singular_values) total += s * s;
  model.explained_variance_ratio.reserve(svd.singular_values.size());
  for (double s : svd.singular_values) {
    model.explained_variance_ratio.push_back(total > 0.0 ? s * s / total : 0.0);
  }
  return {pca_transform(model, x), model};
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  if (static_cast<int>(x.cols()) != model.in_dim) {
    throw ValidationError("pca_transform: input width " + std::to_string(x.cols()) +
                          " does not match model (" + std::to_string(model.in_dim) + ")");
  }
  Matrix out(x.rows(), static_cast<size_t>(model.out_dim));
  for (size_t i = 0; i < x.rows(); ++i) {
    const float* row = x.row(i);
    for (int c = 0; c < model.out_dim; ++c) {
      const double* comp = model.components.data() + static_cast<size_t>(c) * model.in_dim;
      double acc = 0.0;
      for (int j = 0; j < model.in_dim; ++j) {
        acc += (static_cast<double>(row[j]) - model.mean[j]) * comp[j];
      }
      out.at(i, static_cast<size_t>(c)) = static_cast<float>(acc);
    }
  }
  return out;
}

int select_target_dim(const Matrix& x, const TargetDimPolicy& policy) {
  const int avail = static_cast<int>(std::min(x.rows(), x.cols()));
  if (avail < 1) throw ValidationError("select_target_dim: empty input");
  if (policy.mode == TargetDimPolicy::Mode::fixed) {
    int d = std::min(policy.fixed_dim, avail);
    if (d < policy.fixed_dim) {
      log_warn("target dim capped at " + std::to_string(d) + " by data shape");
    }
    return std::max(d, 1);
  }
  SvdSummary svd = centered_svd(x);
  double total = 0.0;
  for (double s : svd.singular_values) total += s * s;
  int d;
  if (total <= 0.0) {
    d = policy.min_dim;
  } else {
    d = static_cast<int>(svd.singular_values.size());
    double cum = 0.0;
    for (size_t i = 0; i < svd.singular_values.size(); ++i) {
      cum += svd.singular_values[i] * svd.singular_values[i];
      if (cum / total >= policy.evr_threshold) {
        d = static_cast<int>(i) + 1;
        break;
      }
    }
  }
  d = std::clamp(d, policy.min_dim, policy.max_dim);
  return std::max(1, std::min(d, avail));
}

namespace {

struct DirectedEdge {
  int32_t head = 0;
  int32_t tail = 0;
  double epochs_per_sample = 0.0;
  double epoch_of_next_sample = 0.0;
  double epochs_per_negative = 0.0;
  double epoch_of_next_negative = 0.0;
};

double clip4(double v) { return v > 4.0 ? 4.0 : (v < -4.0 ? -4.0 : v); }

void attract(float* yi, float* yj, size_t dim, double a, double b, double alpha,
             bool move_other) {
  double rdist = 0.0;
  for (size_t d = 0; d < dim; ++d) {
    double diff = static_cast<double>(yi[d]) - static_cast<double>(yj[d]);
    rdist += diff * diff;
  }
  double coeff = 0.0;
  if (rdist > 0.0) {
    coeff = (-2.0 * a * b * std::pow(rdist, b - 1.0)) / (a * std::pow(rdist, b) + 1.0);
  }
  for (size_t d = 0; d < dim; ++d) {
    double grad = clip4(coeff * (static_cast<double>(yi[d]) - static_cast<double>(yj[d])));
    yi[d] = static_cast<float>(yi[d] + alpha * grad);
    if (move_other) yj[d] = static_cast<float>(yj[d] - alpha * grad);
  }
}

// Returns false when the sampled point was the head itself (sample skipped).
bool repulse(float* yi, const float* yt, size_t dim, double a, double b, double alpha,
             bool same_point) {
  double rdist = 0.0;
  for (size_t d = 0; d < dim; ++d) {
    double diff = static_cast<double>(yi[d]) - static_cast<double>(yt[d]);
    rdist += diff * diff;
  }
  double coeff = 0.0;
  if (rdist > 0.0) {
    coeff = (2.0 * b) / ((0.001 + rdist) * (a * std::pow(rdist, b) + 1.0));
  } else if (same_point) {
    return false;
  }
  for (size_t d = 0; d < dim; ++d) {
    double grad = coeff > 0.0
                      ? clip4(coeff * (static_cast<double>(yi[d]) - static_cast<double>(yt[d])))
                      : 4.0;
    yi[d] = static_cast<float>(yi[d] + alpha * grad);
  }
  return true;
}

void run_layout_shard(Matrix& emb, std::vector<DirectedEdge>& edges, size_t begin, size_t end,
                      int epoch, int n_epochs, double lr, double a, double b, Rng& rng) {
  const size_t dim = emb.cols();
  const size_t n = emb.rows();
  const double alpha = lr * (1.0 - static_cast<double>(epoch) / static_cast<double>(n_epochs));
  for (size_t e = begin; e < end; ++e) {
    DirectedEdge& edge = edges[e];
    if (edge.epoch_of_next_sample > epoch) continue;
    attract(emb.row(edge.head), emb.row(edge.tail), dim, a, b, alpha, true);
    edge.epoch_of_next_sample += edge.epochs_per_sample;
    int n_neg = static_cast<int>((epoch - edge.epoch_of_next_negative) / edge.epochs_per_negative);
    for (int p = 0; p < n_neg; ++p) {
      size_t t = rng.next_index(n);
      repulse(emb.row(edge.head), emb.row(t), dim, a, b, alpha,
              t == static_cast<size_t>(edge.head));
    }
    edge.epoch_of_next_negative += n_neg * edge.epochs_per_negative;
  }
}

}  // namespace

std::pair<Matrix, SpdrModel> fit_umap(const Matrix& x, const UmapParams& params) {
  params.validate();
  if (x.rows() <= static_cast<size_t>(params.n_neighbors)) {
    throw ValidationError("fit_umap: need at least n_neighbors+1 rows");
  }

  KnnResult knn = knn_graph(x, params.n_neighbors, params.n_threads);
  FuzzyGraph graph = fuzzy_union(knn, params.n_threads);
  const int out_dim = select_target_dim(x, params.target_dim);
  const Curve curve = fit_curve(params.min_dist);

  // Scaled PCA initialization: each axis spread into [-10, 10]. fit_pca may
  // deliver fewer columns than out_dim on degenerate data; missing axes
  // stay zero.
  Matrix init = fit_pca(x, out_dim).first;
  Matrix emb(init.rows(), static_cast<size_t>(out_dim));
  for (size_t c = 0; c < std::min<size_t>(init.cols(), static_cast<size_t>(out_dim)); ++c) {
    float maxabs = 0.0f;
    for (size_t i = 0; i < init.rows(); ++i) {
      maxabs = std::max(maxabs, std::fabs(init.at(i, c)));
    }
    if (maxabs <= 0.0f) continue;
    for (size_t i = 0; i < init.rows(); ++i) {
      emb.at(i, c) = init.at(i, c) * (10.0f / maxabs);
    }
  }

  // Directed edge list in CSR order; each undirected edge appears once per
  // endpoint so both ends get their own attraction and negative samples.
  std::vector<DirectedEdge> edges;
  edges.reserve(graph.edges.size() * 2);
  float max_w = 0.0f;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  for (const auto& e : graph.edges) {
    // Edges sampled less than once over the run are dropped, matching the
    // usual cutoff of max_weight / n_epochs.
    if (e.weight < max_w / static_cast<float>(params.n_epochs)) continue;
    double eps = static_cast<double>(max_w) / e.weight;
    DirectedEdge fwd;
    fwd.head = e.u;
    fwd.tail = e.v;
    fwd.epochs_per_sample = eps;
    fwd.epoch_of_next_sample = eps;
    fwd.epochs_per_negative = eps / params.negative_sample_rate;
    fwd.epoch_of_next_negative = fwd.epochs_per_negative;
    DirectedEdge bwd = fwd;
    bwd.head = e.v;
    bwd.tail = e.u;
    edges.push_back(fwd);
    edges.push_back(bwd);
  }
  std::sort(edges.begin(), edges.end(), [](const DirectedEdge& a, const DirectedEdge& b) {
    return std::tie(a.head, a.tail) < std::tie(b.head, b.tail);
  });

  if (params.n_threads <= 1) {
    Rng rng(params.seed);
    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
      run_layout_shard(emb, edges, 0, edges.size(), epoch, params.n_epochs, params.learning_rate,
                       curve.a, curve.b, rng);
    }
  } else {
    // Concurrent shards update the layout without coordination; fast, but
    // results are not reproducible run to run.
    const size_t shards = static_cast<size_t>(params.n_threads);
    std::vector<Rng> rngs;
    Rng root(params.seed);
    for (size_t s = 0; s < shards; ++s) rngs.push_back(root.fork(s + 1));
    const size_t chunk = (edges.size() + shards - 1) / shards;
    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
      std::vector<std::thread> workers;
      for (size_t s = 0; s < shards; ++s) {
        size_t begin = std::min(edges.size(), s * chunk);
        size_t end = std::min(edges.size(), begin + chunk);
        if (begin >= end) continue;
        workers.emplace_back([&, begin, end, s, epoch] {
          run_layout_shard(emb, edges, begin, end, epoch, params.n_epochs, params.learning_rate,
                           curve.a, curve.b, rngs[s]);
        });
      }
      for (auto& w : workers) w.join();
    }
  }

  if (!emb.all_finite()) throw Error("fit_umap: layout diverged to non-finite values");

  SpdrModel model;
  model.params = params;
  model.out_dim = out_dim;
  model.curve = curve;
  model.train_input = x;
  model.train_embedding = emb;
  return {emb, std::move(model)};
}

Matrix transform(const SpdrModel& model, const Matrix& x) {
  const Matrix& train = model.train_input;
  const Matrix& emb = model.train_embedding;
  if (x.cols() != train.cols() && x.rows() > 0) {
    throw ValidationError("transform: input width " + std::to_string(x.cols()) +
                          " does not match model (" + std::to_string(train.cols()) + ")");
  }
  Matrix out(x.rows(), static_cast<size_t>(model.out_dim));
  if (x.rows() == 0) return out;
  if (!x.all_finite()) throw ValidationError("transform: non-finite input");

  const size_t n_train = train.rows();
  const size_t k = std::min(static_cast<size_t>(model.params.n_neighbors), n_train);
  const double a = model.curve.a;
  const double b = model.curve.b;
  constexpr int kRefineSteps = 20;

  parallel_for(x.rows(), model.params.n_threads, [&](size_t q) {
    std::vector<std::pair<float, int32_t>> cand;
    cand.reserve(n_train);
    auto xq = x.row_span(q);
    for (size_t j = 0; j < n_train; ++j) {
      cand.emplace_back(static_cast<float>(euclidean_distance(xq, train.row_span(j))),
                        static_cast<int32_t>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end());

    std::vector<double> w(k, 0.0);
    if (cand[0].first == 0.0f) {
      // Exact duplicates of training rows collapse onto the trained layout.
      for (size_t c = 0; c < k; ++c) w[c] = cand[c].first == 0.0f ? 1.0 : 0.0;
    } else {
      std::vector<float> dists(k);
      for (size_t c = 0; c < k; ++c) dists[c] = cand[c].first;
      auto sk = smooth_knn(dists);
      for (size_t c = 0; c < k; ++c) {
        double d = static_cast<double>(dists[c]) - sk.rho;
        w[c] = d > 0.0 ? std::exp(-d / sk.sigma) : 1.0;
      }
    }
    double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> y(static_cast<size_t>(model.out_dim), 0.0);
    for (size_t c = 0; c < k; ++c) {
      const float* ej = emb.row(static_cast<size_t>(cand[c].second));
      for (int d = 0; d < model.out_dim; ++d) y[d] += w[c] * ej[d];
    }
    for (auto& v : y) v /= wsum;

    // Attraction-only refinement against the frozen anchors. No negative
    // sampling, so a point initialized exactly on its duplicate stays put.
    for (int step = 0; step < kRefineSteps; ++step) {
      double alpha = 0.1 * (1.0 - static_cast<double>(step) / kRefineSteps);
      for (size_t c = 0; c < k; ++c) {
        const float* ej = emb.row(static_cast<size_t>(cand[c].second));
        double rdist = 0.0;
        for (int d = 0; d < model.out_dim; ++d) {
          double diff = y[d] - ej[d];
          rdist += diff * diff;
        }
        if (rdist <= 0.0) continue;
        double coeff = (-2.0 * a * b * std::pow(rdist, b - 1.0)) / (a * std::pow(rdist, b) + 1.0);
        for (int d = 0; d < model.out_dim; ++d) {
          y[d] += alpha * w[c] * clip4(coeff * (y[d] - ej[d]));
        }
      }
    }
    for (int d = 0; d < model.out_dim; ++d) out.at(q, static_cast<size_t>(d)) = static_cast<float>(y[d]);
  });
  return out;
}

Matrix l2_normalize(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (size_t i = 0; i < x.rows(); ++i) {
    double nrm = norm(x.row_span(i));
    if (nrm < 1e-12) {
      throw ValidationError("l2_normalize: zero vector at row " + std::to_string(i));
    }
    for (size_t j = 0; j < x.cols(); ++j) {
      out.at(i, j) = static_cast<float>(x.at(i, j) / nrm);
    }
  }
  return out;
}

Matrix transform_entry(const ModelEntry& entry, const Matrix& x) {
  if (entry.method == Method::pca) return pca_transform(entry.pca, x);
  return transform(entry.umap, x);
}

namespace {

constexpr char kSpdrMagic[4] = {'S', 'P', 'D', 'R'};
constexpr uint32_t kSpdrVersion = 1;

void put_matrix(std::string& out, const Matrix& m) {
  io::put_u32(out, static_cast<uint32_t>(m.rows()));
  io::put_u32(out, static_cast<uint32_t>(m.cols()));
  io::put_bytes(out, m.data().data(), m.data().size() * sizeof(float));
}

Matrix get_matrix(io::ByteReader& r) {
  uint32_t rows = r.get_u32();
  uint32_t cols = r.get_u32();
  std::vector<float> data(static_cast<size_t>(rows) * cols);
  r.get_bytes(data.data(), data.size() * sizeof(float));
  return Matrix(rows, cols, std::move(data));
}

void put_doubles(std::string& out, const std::vector<double>& v) {
  io::put_u32(out, static_cast<uint32_t>(v.size()));
  io::put_bytes(out, v.data(), v.size() * sizeof(double));
}

std::vector<double> get_doubles(io::ByteReader& r) {
  uint32_t n = r.get_u32();
  std::vector<double> v(n);
  r.get_bytes(v.data(), v.size() * sizeof(double));
  return v;
}

void put_umap_model(std::string& out, const SpdrModel& m) {
  io::put_u32(out, static_cast<uint32_t>(m.params.n_neighbors));
  io::put_f64(out, m.params.min_dist);
  io::put_u32(out, static_cast<uint32_t>(m.params.n_epochs));
  io::put_u32(out, static_cast<uint32_t>(m.params.negative_sample_rate));
  io::put_f64(out, m.params.learning_rate);
  io::put_u64(out, m.params.seed);
  io::put_u32(out, m.params.target_dim.mode == TargetDimPolicy::Mode::fixed ? 0u : 1u);
  io::put_u32(out, static_cast<uint32_t>(m.params.target_dim.fixed_dim));
  io::put_f64(out, m.params.target_dim.evr_threshold);
  io::put_u32(out, static_cast<uint32_t>(m.params.target_dim.min_dim));
  io::put_u32(out, static_cast<uint32_t>(m.params.target_dim.max_dim));
  io::put_u32(out, static_cast<uint32_t>(m.out_dim));
  io::put_f64(out, m.curve.a);
  io::put_f64(out, m.curve.b);
  put_matrix(out, m.train_input);
  put_matrix(out, m.train_embedding);
}

SpdrModel get_umap_model(io::ByteReader& r) {
  SpdrModel m;
  m.params.n_neighbors = static_cast<int>(r.get_u32());
  m.params.min_dist = r.get_f64();
  m.params.n_epochs = static_cast<int>(r.get_u32());
  m.params.negative_sample_rate = static_cast<int>(r.get_u32());
  m.params.learning_rate = r.get_f64();
  m.params.seed = r.get_u64();
  m.params.target_dim.mode =
      r.get_u32() == 0 ? TargetDimPolicy::Mode::fixed : TargetDimPolicy::Mode::adaptive;
  m.params.target_dim.fixed_dim = static_cast<int>(r.get_u32());
  m.params.target_dim.evr_threshold = r.get_f64();
  m.params.target_dim.min_dim = static_cast<int>(r.get_u32());
  m.params.target_dim.max_dim = static_cast<int>(r.get_u32());
  m.out_dim = static_cast<int>(r.get_u32());
  m.curve.a = r.get_f64();
  m.curve.b = r.get_f64();
  m.train_input = get_matrix(r);
  m.train_embedding = get_matrix(r);
  return m;
}

}  // namespace

void ModelSet::save(const std::filesystem::path& path) const {
  if (dim_names.size() != models.size()) throw ValidationError("model set name/model mismatch");
  std::string out;
  io::put_bytes(out, kSpdrMagic, 4);
  io::put_u32(out, kSpdrVersion);
  io::put_u32(out, static_cast<uint32_t>(models.size()));
  for (size_t i = 0; i < models.size(); ++i) {
    io::put_u32(out, static_cast<uint32_t>(dim_names[i].size()));
    io::put_bytes(out, dim_names[i].data(), dim_names[i].size());
    const ModelEntry& e = models[i];
    io::put_u32(out, e.method == Method::umap ? 0u : 1u);
    if (e.method == Method::umap) {
      put_umap_model(out, e.umap);
    } else {
      io::put_u32(out, static_cast<uint32_t>(e.pca.in_dim));
      io::put_u32(out, static_cast<uint32_t>(e.pca.out_dim));
      put_doubles(out, e.pca.mean);
      put_doubles(out, e.pca.components);
      put_doubles(out, e.pca.explained_variance_ratio);
    }
  }
  io::atomic_write_file(path, out);
}

ModelSet ModelSet::load(const std::filesystem::path& path) {
  std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic(kSpdrMagic);
  uint32_t version = r.get_u32();
  if (version != kSpdrVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  uint32_t n = r.get_u32();
  ModelSet set;
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = r.get_u32();
    set.dim_names.push_back(r.get_string(len));
    ModelEntry e;
    e.method = r.get_u32() == 0 ? Method::umap : Method::pca;
    if (e.method == Method::umap) {
      e.umap = get_umap_model(r);
    } else {
      e.pca.in_dim = static_cast<int>(r.get_u32());
      e.pca.out_dim = static_cast<int>(r.get_u32());
      e.pca.mean = get_doubles(r);
      e.pca.components = get_doubles(r);
      e.pca.explained_variance_ratio = get_doubles(r);
    }
    set.models.push_back(std::move(e));
  }
  r.expect_end();
  return set;
}

}  // namespace fitrep::spdr
