#include <benchmark/benchmark.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fitrep/cluster_store.hpp"
#include "fitrep/fbc.hpp"
#include "fitrep/rng.hpp"

namespace {

using namespace fitrep;
namespace fs = std::filesystem;

fs::path store_file() {
  static fs::path path = [] {
    auto p = fs::temp_directory_path() / "fitrep_bench_store.bin";
    fbc::ClusterAssignment asg;
    asg.n_clusters = 20000;
    char buf[24];
    Rng rng(99);
    for (size_t i = 0; i < 100000; ++i) {
      std::snprintf(buf, sizeof buf, "item-%06zu", i);
      asg.item_ids.emplace_back(buf);
      asg.cluster_ids.push_back(static_cast<int32_t>(rng.next_index(20000)));
    }
    app::ClusterStore::build(p, asg, "benchbenchbenchb");
    return p;
  }();
  return path;
}

void BM_StoreLookupHit(benchmark::State& state) {
  auto store = app::ClusterStore::open(store_file());
  Rng rng(1);
  char buf[24];
  for (auto _ : state) {
    std::snprintf(buf, sizeof buf, "item-%06zu", rng.next_index(100000));
    benchmark::DoNotOptimize(store.lookup(buf));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StoreLookupHit);

void BM_StoreLookupMiss(benchmark::State& state) {
  auto store = app::ClusterStore::open(store_file());
  Rng rng(2);
  char buf[24];
  for (auto _ : state) {
    std::snprintf(buf, sizeof buf, "nope-%06zu", rng.next_index(100000));
    benchmark::DoNotOptimize(store.lookup(buf));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StoreLookupMiss);

void BM_DedupRankedList(benchmark::State& state) {
  auto store = app::ClusterStore::open(store_file());
  Rng rng(3);
  std::vector<std::string> ranked;
  char buf[24];
  for (int i = 0; i < 200; ++i) {
    std::snprintf(buf, sizeof buf, "item-%06zu", rng.next_index(100000));
    ranked.emplace_back(buf);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(app::dedup_ranked_list(ranked, store));
  }
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_DedupRankedList);

}  // namespace
