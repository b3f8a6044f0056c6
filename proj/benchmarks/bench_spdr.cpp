#include <benchmark/benchmark.h>

#include <vector>

#include "fitrep/matrix.hpp"
#include "fitrep/rng.hpp"
#include "fitrep/spdr.hpp"

namespace {

fitrep::Matrix random_rows(size_t n, size_t dim, uint64_t seed) {
  fitrep::Rng rng(seed);
  fitrep::Matrix m(n, dim);
  for (auto& v : m.data()) v = static_cast<float>(rng.next_gaussian());
  return m;
}

void BM_KnnGraph(benchmark::State& state) {
  auto x = random_rows(static_cast<size_t>(state.range(0)), 64, 7);
  int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::spdr::knn_graph(x, 15, threads));
  }
}
BENCHMARK(BM_KnnGraph)->Args({500, 1})->Args({500, 4})->Args({2000, 4});

void BM_SmoothKnn(benchmark::State& state) {
  fitrep::Rng rng(11);
  std::vector<float> d(15);
  float cur = 0.2f;
  for (auto& v : d) {
    v = cur;
    cur += 0.05f + 0.3f * rng.next_float();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::spdr::smooth_knn(d));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SmoothKnn);

void BM_FitUmap(benchmark::State& state) {
  auto x = random_rows(400, 64, 13);
  fitrep::spdr::UmapParams p;
  p.n_neighbors = 10;
  p.n_epochs = 50;
  p.target_dim.mode = fitrep::spdr::TargetDimPolicy::Mode::fixed;
  p.target_dim.fixed_dim = 8;
  p.n_threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::spdr::fit_umap(x, p));
  }
}
BENCHMARK(BM_FitUmap)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_FitPca(benchmark::State& state) {
  auto x = random_rows(400, 64, 17);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::spdr::fit_pca(x, 8));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FitPca)->Unit(benchmark::kMillisecond);

}  // namespace
