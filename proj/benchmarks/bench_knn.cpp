// Cost of one historic-store locality query: a full scan over the stored
// standardized weather situations with a bounded neighbor heap. This
// dominates prediction latency whenever local gating is active.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "csge/weighting.hpp"

namespace {

struct StoreFixture {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> abs_errors;
  csge::HistoricStore store;
  std::vector<std::vector<double>> queries;
};

StoreFixture make_fixture(int rows, int dims, int members, int neighbors) {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  StoreFixture f;
  f.features.assign(rows, std::vector<double>(dims));
  for (auto& row : f.features) {
    for (double& v : row) v = dist(rng);
  }
  f.abs_errors.assign(members, std::vector<double>(rows));
  for (auto& member : f.abs_errors) {
    for (double& e : member) e = dist(rng);
  }
  std::vector<const std::vector<double>*> pointers;
  for (const auto& row : f.features) pointers.push_back(&row);
  std::vector<double> mean;
  std::vector<double> scale;
  csge::standardization_stats(pointers, mean, scale);
  f.store = csge::make_historic_store(pointers, f.abs_errors, std::move(mean),
                                      std::move(scale), neighbors);
  f.queries.assign(64, std::vector<double>(dims));
  for (auto& q : f.queries) {
    for (double& v : q) v = dist(rng);
  }
  return f;
}

void BM_LocalQuality(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  const int dims = static_cast<int>(state.range(1));
  const int neighbors = static_cast<int>(state.range(2));
  const StoreFixture f = make_fixture(rows, dims, 2, neighbors);
  std::size_t next = 0;
  for (auto _ : state) {
    const csge::LocalQuality q =
        f.store.local_quality(f.queries[next++ % f.queries.size()]);
    benchmark::DoNotOptimize(q.q.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}

}  // namespace

BENCHMARK(BM_LocalQuality)
    ->ArgsProduct({{512, 4096, 16384}, {6}, {10, 30}})
    ->ArgNames({"rows", "dims", "k"});

BENCHMARK_MAIN();
