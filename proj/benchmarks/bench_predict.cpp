// Latency of one full ensemble prediction (base forecasters, locality
// queries, weight assembly, combination) on a realistically fitted state.

#include <benchmark/benchmark.h>

#include <vector>

#include "csge/core.hpp"
#include "csge/ensemble.hpp"
#include "csge/synth.hpp"
#include "csge/training.hpp"

namespace {

struct FittedFixture {
  csge::DataSet data;
  csge::FitResult fit;
  std::vector<csge::AlignedRow> rows;
};

const FittedFixture& fixture() {
  static const FittedFixture f = [] {
    csge::ScenarioSpec spec = csge::scenario_by_name("pme-single");
    spec.n_origins = 400;
    csge::TrainConfig config;
    config.zeta = 0.0;  // skip the regularization grid; speed over polish
    FittedFixture result{csge::generate(spec), {}, {}};
    result.fit = csge::fit_csge(
        result.data,
        {csge::ForecasterKind::linear_regression,
         csge::ForecasterKind::knn_regressor},
        config, {});
    result.rows = csge::align_all(result.data);
    return result;
  }();
  return f;
}

void BM_PredictRow(benchmark::State& state) {
  const FittedFixture& f = fixture();
  std::size_t next = 0;
  for (auto _ : state) {
    const csge::Prediction p = csge::predict_csge(
        f.fit.state, f.fit.forecasters, f.rows[next++ % f.rows.size()]);
    benchmark::DoNotOptimize(p.value);
  }
}

}  // namespace

BENCHMARK(BM_PredictRow);

BENCHMARK_MAIN();
