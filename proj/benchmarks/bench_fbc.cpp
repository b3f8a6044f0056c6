#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>
#include <vector>

#include "fitrep/fbc.hpp"
#include "fitrep/matrix.hpp"
#include "fitrep/rng.hpp"

namespace {

using namespace fitrep;

std::vector<float> unit_row(Rng& rng, size_t dim) {
  std::vector<float> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(rng.next_gaussian());
    n2 += static_cast<double>(x) * x;
  }
  float inv = static_cast<float>(1.0 / std::sqrt(n2));
  for (auto& x : v) x *= inv;
  return v;
}

Matrix fused_rows(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> raw(3, 1.0);
  auto w = fbc::normalize_weights(raw);
  fbc::QuantityMapParams qp;
  Matrix out;
  for (size_t i = 0; i < n; ++i) {
    std::vector<std::vector<float>> dims{unit_row(rng, 4), unit_row(rng, 4)};
    auto row = fbc::fuse(dims, 1.0 + static_cast<double>(rng.next_index(100)), w, qp);
    if (out.empty()) out = Matrix(n, row.size());
    std::copy(row.begin(), row.end(), out.row(i));
  }
  return out;
}

void BM_Fuse(benchmark::State& state) {
  Rng rng(3);
  std::vector<std::vector<float>> dims;
  for (int k = 0; k < 7; ++k) dims.push_back(unit_row(rng, 8));
  std::vector<double> raw(8, 1.0);
  auto w = fbc::normalize_weights(raw);
  fbc::QuantityMapParams qp;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fbc::fuse(dims, 12.0, w, qp));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Fuse);

void BM_ExactRangeSearch(benchmark::State& state) {
  auto vectors = fused_rows(static_cast<size_t>(state.range(0)), 5);
  auto index = fbc::build_exact_index(vectors);
  size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index->range_search(vectors.row_span(q), 0.25));
    q = (q + 1) % vectors.rows();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExactRangeSearch)->Arg(2000)->Arg(10000);

void BM_IvfRangeSearch(benchmark::State& state) {
  auto vectors = fused_rows(static_cast<size_t>(state.range(0)), 5);
  auto index = fbc::build_ivf_index(vectors, fbc::IvfParams{100, 8, 42, 25});
  size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index->range_search(vectors.row_span(q), 0.25));
    q = (q + 1) % vectors.rows();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_IvfRangeSearch)->Arg(2000)->Arg(10000);

void BM_IvfBuild(benchmark::State& state) {
  auto vectors = fused_rows(10000, 5);
  for (auto _ : state) {
    Matrix copy = vectors;
    benchmark::DoNotOptimize(fbc::build_ivf_index(std::move(copy), fbc::IvfParams{100, 8, 42, 25}));
  }
}
BENCHMARK(BM_IvfBuild)->Unit(benchmark::kMillisecond);

}  // namespace
