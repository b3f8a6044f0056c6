#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "fitrep/encode.hpp"

namespace {

const std::string kShort = "solid oak side table";
const std::string kLong =
    "solid oak side table with a hand rubbed oil finish, tapered legs, a single dovetailed "
    "drawer and adjustable floor glides, set of 4";

void BM_MockEncodeShort(benchmark::State& state) {
  int dim = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::encode::mock_encode(kShort, dim, 42));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MockEncodeShort)->Arg(64)->Arg(256)->Arg(1024);

void BM_MockEncodeLong(benchmark::State& state) {
  int dim = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::encode::mock_encode(kLong, dim, 42));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(kLong.size()));
}
BENCHMARK(BM_MockEncodeLong)->Arg(256);

void BM_EncodeTextsBatch(benchmark::State& state) {
  fitrep::encode::EncoderConfig cfg;
  cfg.dim = 256;
  std::vector<std::string> texts(512, kShort);
  int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fitrep::encode::encode_texts(texts, cfg, threads));
  }
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_EncodeTextsBatch)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
