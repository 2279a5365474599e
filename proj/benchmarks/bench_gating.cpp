// Throughput of the soft-gate weight computation, the innermost kernel of
// every weight assembly. Covers the uniform shortcut (eta = 0), a typical
// trained exponent, and a strongly competitive one, across tuple sizes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "csge/gating.hpp"

namespace {

std::vector<double> random_scores(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  std::vector<double> scores(n);
  for (double& s : scores) s = dist(rng);
  return scores;
}

void BM_SoftGateInto(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const double eta = static_cast<double>(state.range(1));
  const std::vector<double> scores = random_scores(n, 42);
  std::vector<double> weights(n);
  for (auto _ : state) {
    csge::soft_gate_into(scores, eta, csge::kDefaultEpsilon, weights);
    benchmark::DoNotOptimize(weights.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_SoftGateAllAlloc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const csge::ScoreTuple tuple{random_scores(n, 43), csge::kDefaultEpsilon};
  for (auto _ : state) {
    std::vector<double> weights = csge::soft_gate_all(tuple, 2.0);
    benchmark::DoNotOptimize(weights.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_SoftGateInto)
    ->ArgsProduct({{2, 4, 8, 32}, {0, 2, 50}})
    ->ArgNames({"n", "eta"});
BENCHMARK(BM_SoftGateAllAlloc)->Arg(4)->Arg(8)->ArgName("n");

BENCHMARK_MAIN();
