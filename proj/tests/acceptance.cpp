// End-to-end acceptance suite. Each numbered check prints exactly one
//
//   ACCEPTANCE <n> (<name>): PASS|FAIL [measurements]
//
// line on stdout and fails the test run when its conditions do not hold.
// The checks cover the gating algebra, the locality-query oracle, the
// metric references, optimizer behavior, the qualitative study results on
// the synthetic scenario catalog, robustness to dropped members, convexity
// of every output, and bit-level determinism of the command-line pipeline.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csge/core.hpp"
#include "csge/ensemble.hpp"
#include "csge/forecasters.hpp"
#include "csge/gating.hpp"
#include "csge/metrics.hpp"
#include "csge/synth.hpp"
#include "csge/training.hpp"
#include "csge/weighting.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace csge;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Prints the one-line verdict for a numbered check.
void report(int number, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("ACCEPTANCE %d (%s): %s%s%s\n", number, name.c_str(),
              pass ? "PASS" : "FAIL", detail.empty() ? "" : " ",
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double value, int digits = 4) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*g", digits, value);
  return buffer;
}

// ---------------------------------------------------------------------------
// Trained-ensemble registry. Scenario fits are expensive, so each distinct
// configuration is trained once, on first use, and shared by the checks.

struct Fitted {
  DataSet data;
  SplitResult roles;
  FitResult fit;
  std::vector<AlignedRow> test;  ///< aligned rows of the test origins

  int weather_models() const { return fit.report.weather_models; }
  int power_models() const { return fit.report.power_models; }
};

Fitted train_scenario(const ScenarioSpec& spec,
                      const std::vector<ForecasterKind>& power_models,
                      const TrainConfig& config = {},
                      const SplitPlan& plan = {}) {
  Fitted fitted{generate(spec), {}, {}, {}};
  fitted.roles = split(fitted.data, plan);
  fitted.fit = fit_csge(fitted.data, power_models, config, plan);
  for (const AlignedRow& row : align_all(fitted.data)) {
    if (std::binary_search(fitted.roles.test.begin(), fitted.roles.test.end(),
                           row.origin)) {
      fitted.test.push_back(row);
    }
  }
  return fitted;
}

const std::vector<ForecasterKind> kLinearKnn{ForecasterKind::linear_regression,
                                             ForecasterKind::knn_regressor};

/// Full ensemble on the three-weather-model day-ahead scenario.
const Fitted& mme_full() {
  static const Fitted f =
      train_scenario(scenario_by_name("mme-day-ahead"), kLinearKnn);
  return f;
}

/// Same scenario restricted to its first (best) weather model.
const Fitted& mme_single() {
  static const Fitted f = [] {
    ScenarioSpec spec = scenario_by_name("mme-day-ahead");
    spec.weather_models.resize(1);
    return train_scenario(spec, kLinearKnn);
  }();
  return f;
}

/// Static multi-model baseline: one linear power model per weather model,
/// global weather gating fixed at exponent 2, everything else uniform.
const Fitted& mme_fixed() {
  static const Fitted f = [] {
    TrainConfig config;
    config.zeta = 0.0;
    config.pinned.fill(0.0);
    config.pinned[EtaVector::kGlobalWeather] = 2.0;
    return train_scenario(scenario_by_name("mme-day-ahead"),
                          {ForecasterKind::linear_regression}, config);
  }();
  return f;
}

/// Uniform multi-model baseline: linear members, every exponent pinned 0.
const Fitted& mme_equal() {
  static const Fitted f = [] {
    TrainConfig config;
    config.zeta = 0.0;
    config.pinned.fill(0.0);
    return train_scenario(scenario_by_name("mme-day-ahead"),
                          {ForecasterKind::linear_regression}, config);
  }();
  return f;
}

/// Intraday scenario with a persistence member alongside the learned ones.
const Fitted& intraday_with_persistence() {
  static const Fitted f = train_scenario(
      scenario_by_name("intraday-lagged"),
      {ForecasterKind::linear_regression, ForecasterKind::knn_regressor,
       ForecasterKind::persistence});
  return f;
}

const Fitted& intraday_without_persistence() {
  static const Fitted f =
      train_scenario(scenario_by_name("intraday-lagged"), kLinearKnn);
  return f;
}

/// Model-count sweep with all three weather models (third has 3x noise).
const Fitted& sweep_three() {
  static const Fitted f =
      train_scenario(scenario_by_name("model-count-sweep"), kLinearKnn);
  return f;
}

/// The same sweep restricted to the two well-behaved weather models.
const Fitted& sweep_two() {
  static const Fitted f = [] {
    ScenarioSpec spec = scenario_by_name("model-count-sweep");
    spec.weather_models.resize(2);
    return train_scenario(spec, kLinearKnn);
  }();
  return f;
}

/// Single-weather-model scenario with the default model pair.
const Fitted& pme() {
  static const Fitted f =
      train_scenario(scenario_by_name("pme-single"), kLinearKnn);
  return f;
}

// ---------------------------------------------------------------------------
// Evaluation helpers.

/// RMSE of the fitted ensemble over the given rows (optionally only rows
/// with lead <= max_lead).
double ensemble_rmse(const Fitted& f, int max_lead = 1 << 30) {
  std::vector<double> forecasts;
  std::vector<double> observations;
  for (const AlignedRow& row : f.test) {
    if (row.lead > max_lead) continue;
    forecasts.push_back(
        predict_csge(f.fit.state, f.fit.forecasters, row).value);
    observations.push_back(row.observation);
  }
  return rmse(forecasts, observations);
}

/// RMSE of the unweighted mean of the available member forecasts.
double equal_weight_rmse(const Fitted& f) {
  std::vector<double> forecasts;
  std::vector<double> observations;
  for (const AlignedRow& row : f.test) {
    const auto values = member_values(f.fit.forecasters, f.weather_models(),
                                      f.power_models(), row);
    double sum = 0.0;
    int count = 0;
    for (const auto& value : values) {
      if (value.has_value()) {
        sum += *value;
        ++count;
      }
    }
    if (count == 0) continue;
    forecasts.push_back(sum / count);
    observations.push_back(row.observation);
  }
  return rmse(forecasts, observations);
}

/// Per-member RMSE by flat member index (members must be available on
/// every test row, which holds for the synthetic scenarios).
std::vector<double> member_rmses(const Fitted& f) {
  const int members = f.weather_models() * f.power_models();
  std::vector<std::vector<double>> forecasts(members);
  std::vector<std::vector<double>> observations(members);
  for (const AlignedRow& row : f.test) {
    const auto values = member_values(f.fit.forecasters, f.weather_models(),
                                      f.power_models(), row);
    for (int j = 0; j < members; ++j) {
      if (values[j].has_value()) {
        forecasts[j].push_back(*values[j]);
        observations[j].push_back(row.observation);
      }
    }
  }
  std::vector<double> result(members);
  for (int j = 0; j < members; ++j) {
    REQUIRE(!forecasts[j].empty());
    result[j] = rmse(forecasts[j], observations[j]);
  }
  return result;
}

int run_cli(const fs::path& scratch, const std::string& args) {
  static int counter = 0;
  const fs::path log = scratch / ("cli_log_" + std::to_string(counter++));
  const std::string command = std::string(CSGE_CLI_PATH) + " " + args + " >" +
                              log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string read_file(const fs::path& path) {
  REQUIRE(fs::is_regular_file(path));
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("acceptance 1: gating suite") {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size_dist(1, 10);
  std::uniform_real_distribution<double> score_dist(0.1, 10.0);
  std::uniform_real_distribution<double> eta_dist(0.0, 8.0);
  std::uniform_real_distribution<double> scale_dist(0.1, 100.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double max_sum_dev = 0.0;
  double max_uniform_dev = 0.0;
  double max_scale_dev = 0.0;
  double min_winner_weight = 1.0;
  int argmax_mismatches = 0;

  for (int iteration = 0; iteration < 1000; ++iteration) {
    const int n = size_dist(rng);
    std::vector<double> scores(n);
    for (double& s : scores) s = score_dist(rng);
    const double eta = (iteration % 4 == 0) ? 0.0 : eta_dist(rng);

    // Normalization at the default stabilizer.
    const std::vector<double> weights = soft_gate_all({scores, kDefaultEpsilon}, eta);
    double sum = 0.0;
    for (double w : weights) sum += w;
    max_sum_dev = std::max(max_sum_dev, std::abs(sum - 1.0));

    // Zero exponent weights uniformly.
    if (eta == 0.0) {
      for (double w : weights) {
        max_uniform_dev = std::max(max_uniform_dev, std::abs(w - 1.0 / n));
      }
    }

    // The best (lowest) score always carries the most weight.
    if (eta > 0.0 && n > 1) {
      const auto best_score =
          std::min_element(scores.begin(), scores.end()) - scores.begin();
      const auto best_weight =
          std::max_element(weights.begin(), weights.end()) - weights.begin();
      if (best_score != best_weight) ++argmax_mismatches;
    }

    // Exact scale invariance without the stabilizer.
    const std::vector<double> base = soft_gate_all({scores, 0.0}, eta);
    const double c = scale_dist(rng);
    std::vector<double> scaled = scores;
    for (double& s : scaled) s *= c;
    const std::vector<double> rescaled = soft_gate_all({scaled, 0.0}, eta);
    for (int i = 0; i < n; ++i) {
      max_scale_dev = std::max(max_scale_dev, std::abs(rescaled[i] - base[i]));
    }

    // Competitive regime: at eta = 50 a score separated by at least 2x
    // from every rival takes essentially all weight.
    if (n > 1) {
      std::vector<double> separated(n);
      const int winner = static_cast<int>(rng() % n);
      separated[winner] = 1.0 + unit(rng);
      for (int i = 0; i < n; ++i) {
        if (i != winner) {
          separated[i] = separated[winner] * (2.0 + 2.0 * unit(rng));
        }
      }
      const std::vector<double> competitive =
          soft_gate_all({separated, kDefaultEpsilon}, 50.0);
      min_winner_weight = std::min(min_winner_weight, competitive[winner]);
      double competitive_sum = 0.0;
      for (double w : competitive) competitive_sum += w;
      max_sum_dev = std::max(max_sum_dev, std::abs(competitive_sum - 1.0));
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = max_sum_dev <= 1e-12 && max_uniform_dev <= 1e-12 &&
                    argmax_mismatches == 0 && max_scale_dev <= 1e-12 &&
                    min_winner_weight >= 0.999 && elapsed < 1.0;
  report(1, "gating suite", pass,
         "[1000 draws; max |sum-1| " + fmt(max_sum_dev, 3) +
             "; max uniform dev " + fmt(max_uniform_dev, 3) +
             "; argmax mismatches " + std::to_string(argmax_mismatches) +
             "; max scale dev " + fmt(max_scale_dev, 3) + "; min winner " +
             fmt(min_winner_weight, 6) + "; " + fmt(elapsed, 3) + "s]");
  CHECK(max_sum_dev <= 1e-12);
  CHECK(max_uniform_dev <= 1e-12);
  CHECK(argmax_mismatches == 0);
  CHECK(max_scale_dev <= 1e-12);
  CHECK(min_winner_weight >= 0.999);
  CHECK(elapsed < 1.0);
}

TEST_CASE("acceptance 2: locality oracle") {
  const auto start = Clock::now();
  std::mt19937_64 rng(987654321);
  std::uniform_real_distribution<double> feature_dist(-5.0, 5.0);
  std::uniform_real_distribution<double> error_dist(0.0, 2.0);
  const std::array<int, 3> neighbor_choices{1, 5, 20};

  int index_mismatches = 0;
  int degraded_mismatches = 0;
  double max_q_dev = 0.0;
  int queries = 0;

  for (int store_index = 0; store_index < 200; ++store_index) {
    const int rows = 1 + static_cast<int>(rng() % 2000);
    const int dims = 1 + static_cast<int>(rng() % 8);
    const int members = 1 + static_cast<int>(rng() % 3);
    const int neighbor_count = neighbor_choices[rng() % 3];

    std::vector<std::vector<double>> features(rows,
                                              std::vector<double>(dims));
    for (auto& row : features) {
      for (int d = 0; d < dims; ++d) {
        // Mixed per-dimension scales exercise the standardization.
        row[d] = feature_dist(rng) * std::pow(10.0, d % 3 - 1);
      }
    }
    std::vector<std::vector<double>> abs_errors(members,
                                                std::vector<double>(rows));
    for (auto& member : abs_errors) {
      for (double& e : member) e = error_dist(rng);
    }

    std::vector<const std::vector<double>*> row_pointers;
    row_pointers.reserve(features.size());
    for (const auto& row : features) row_pointers.push_back(&row);
    std::vector<double> mean;
    std::vector<double> scale;
    standardization_stats(row_pointers, mean, scale);
    const HistoricStore store = make_historic_store(
        row_pointers, abs_errors, std::move(mean), std::move(scale),
        neighbor_count);

    for (int q = 0; q < 3; ++q) {
      std::vector<double> query(dims);
      for (int d = 0; d < dims; ++d) {
        query[d] = feature_dist(rng) * std::pow(10.0, d % 3 - 1);
      }
      const LocalQuality result = store.local_quality(query);
      ++queries;

      // Brute-force reference: standardize with the store's statistics
      // and rank every row by squared distance, ties to the lower index.
      std::vector<double> standardized(dims);
      for (int d = 0; d < dims; ++d) {
        standardized[d] =
            (query[d] - store.feature_mean[d]) / store.feature_scale[d];
      }
      std::vector<std::pair<double, std::uint32_t>> distances(rows);
      for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int d = 0; d < dims; ++d) {
          const double diff = store.features[static_cast<std::size_t>(r) * dims + d] -
                              standardized[d];
          acc += diff * diff;
        }
        distances[r] = {acc, static_cast<std::uint32_t>(r)};
      }
      std::sort(distances.begin(), distances.end(),
                [](const auto& a, const auto& b) {
                  return a.first < b.first ||
                         (a.first == b.first && a.second < b.second);
                });
      const int k = std::min(neighbor_count, rows);
      std::vector<std::uint32_t> expected_indices(k);
      for (int i = 0; i < k; ++i) expected_indices[i] = distances[i].second;
      std::sort(expected_indices.begin(), expected_indices.end());

      std::vector<std::uint32_t> got_indices = result.neighbors;
      std::sort(got_indices.begin(), got_indices.end());
      if (got_indices != expected_indices) ++index_mismatches;
      if (result.degraded != (rows < neighbor_count)) ++degraded_mismatches;

      for (int m = 0; m < members; ++m) {
        double acc = 0.0;
        for (std::uint32_t r : expected_indices) acc += abs_errors[m][r];
        max_q_dev = std::max(max_q_dev, std::abs(result.q[m] - acc / k));
      }
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = index_mismatches == 0 && degraded_mismatches == 0 &&
                    max_q_dev <= 1e-12 && elapsed < 10.0;
  report(2, "locality oracle", pass,
         "[200 stores, " + std::to_string(queries) +
             " queries; index mismatches " + std::to_string(index_mismatches) +
             "; max q dev " + fmt(max_q_dev, 3) + "; " + fmt(elapsed, 3) +
             "s]");
  CHECK(index_mismatches == 0);
  CHECK(degraded_mismatches == 0);
  CHECK(max_q_dev <= 1e-12);
  CHECK(elapsed < 10.0);
}

TEST_CASE("acceptance 3: metric oracles") {
  std::mt19937_64 rng(13579);
  std::uniform_real_distribution<double> value_dist(0.0, 1.0);

  double max_rmse_dev = 0.0;
  double max_r2_dev = 0.0;
  double max_skill_dev = 0.0;
  for (int iteration = 0; iteration < 100; ++iteration) {
    const int n = 2 + static_cast<int>(rng() % 400);
    std::vector<double> forecasts(n);
    std::vector<double> observations(n);
    for (int i = 0; i < n; ++i) {
      forecasts[i] = value_dist(rng);
      observations[i] = value_dist(rng);
    }

    // Two-pass RMSE reference in extended precision.
    long double square_sum = 0.0L;
    for (int i = 0; i < n; ++i) {
      const long double diff = forecasts[i] - observations[i];
      square_sum += diff * diff;
    }
    const double rmse_reference =
        std::sqrt(static_cast<double>(square_sum / n));
    max_rmse_dev = std::max(
        max_rmse_dev, std::abs(rmse(forecasts, observations) - rmse_reference));

    // Two-pass squared-correlation reference: means first, then moments.
    long double mean_f = 0.0L;
    long double mean_o = 0.0L;
    for (int i = 0; i < n; ++i) {
      mean_f += forecasts[i];
      mean_o += observations[i];
    }
    mean_f /= n;
    mean_o /= n;
    long double covariance = 0.0L;
    long double variance_f = 0.0L;
    long double variance_o = 0.0L;
    for (int i = 0; i < n; ++i) {
      const long double df = forecasts[i] - mean_f;
      const long double dobs = observations[i] - mean_o;
      covariance += df * dobs;
      variance_f += df * df;
      variance_o += dobs * dobs;
    }
    const double r2_reference = static_cast<double>(
        (covariance * covariance) / (variance_f * variance_o));
    const std::optional<double> r2 = r_squared(forecasts, observations);
    REQUIRE(r2.has_value());
    max_r2_dev = std::max(max_r2_dev, std::abs(*r2 - r2_reference));

    const double base_error = 0.1 + value_dist(rng);
    const double eval_error = value_dist(rng);
    const double skill_reference = (base_error - eval_error) / base_error;
    max_skill_dev = std::max(
        max_skill_dev, std::abs(skill(base_error, eval_error) - skill_reference));
  }

  // Win shares with deliberate ties always account for every dataset.
  bool wins_exact = true;
  std::uniform_int_distribution<int> grid_dist(0, 4);
  for (int iteration = 0; iteration < 50; ++iteration) {
    const int methods = 2 + static_cast<int>(rng() % 4);
    const int datasets = 1 + static_cast<int>(rng() % 12);
    std::vector<std::vector<double>> scores(
        methods, std::vector<double>(datasets));
    for (auto& row : scores) {
      for (double& s : row) s = 0.1 * grid_dist(rng);
    }
    const WinTally tally = wins(scores, Direction::lower_better);
    long long numerator_sum = 0;
    for (long long n : tally.numerators) numerator_sum += n;
    if (numerator_sum != static_cast<long long>(datasets) * tally.denominator) {
      wins_exact = false;
    }
    double share_sum = 0.0;
    for (double w : tally.wins) share_sum += w;
    if (std::abs(share_sum - datasets) > 1e-12) wins_exact = false;
  }

  const bool pass = max_rmse_dev <= 1e-12 && max_r2_dev <= 1e-12 &&
                    max_skill_dev <= 1e-12 && wins_exact;
  report(3, "metric oracles", pass,
         "[100 vector pairs; rmse dev " + fmt(max_rmse_dev, 3) + "; r2 dev " +
             fmt(max_r2_dev, 3) + "; skill dev " + fmt(max_skill_dev, 3) +
             "; win totals " + (wins_exact ? "exact" : "broken") + "]");
  CHECK(max_rmse_dev <= 1e-12);
  CHECK(max_r2_dev <= 1e-12);
  CHECK(max_skill_dev <= 1e-12);
  CHECK(wins_exact);
}

TEST_CASE("acceptance 4: optimizer sanity") {
  // Separable quadratic surrogate: minimum at (2, 0, 0, 0, 0, 0).
  const TrainConfig config;
  const EtaVector optimum = optimize_eta(config, [](const EtaVector& eta) {
    double value = (eta.v[0] - 2.0) * (eta.v[0] - 2.0);
    for (int s = 1; s < EtaVector::kSize; ++s) value += eta.v[s] * eta.v[s];
    return value;
  });
  double surrogate_dev = std::abs(optimum.v[0] - 2.0);
  for (int s = 1; s < EtaVector::kSize; ++s) {
    surrogate_dev = std::max(surrogate_dev, std::abs(optimum.v[s]));
  }

  // Overwhelming exponent regularization drives a real fit to the uniform
  // ensemble.
  ScenarioSpec spec = scenario_by_name("pme-single");
  spec.n_origins = 400;
  TrainConfig heavy;
  heavy.zeta = 1e6;
  const Fitted fitted = train_scenario(spec, kLinearKnn, heavy);
  double eta_magnitude = 0.0;
  for (double v : fitted.fit.report.chosen_eta.v) {
    eta_magnitude = std::max(eta_magnitude, std::abs(v));
  }
  double max_uniform_dev = 0.0;
  for (const AlignedRow& row : fitted.test) {
    const Prediction prediction =
        predict_csge(fitted.fit.state, fitted.fit.forecasters, row);
    const auto values =
        member_values(fitted.fit.forecasters, fitted.weather_models(),
                      fitted.power_models(), row);
    double sum = 0.0;
    int count = 0;
    for (const auto& value : values) {
      if (value.has_value()) {
        sum += *value;
        ++count;
      }
    }
    REQUIRE(count > 0);
    max_uniform_dev =
        std::max(max_uniform_dev, std::abs(prediction.value - sum / count));
  }

  const bool pass =
      surrogate_dev <= 1e-3 && eta_magnitude <= 1e-3 && max_uniform_dev <= 1e-6;
  report(4, "optimizer sanity", pass,
         "[surrogate dev " + fmt(surrogate_dev, 3) + "; heavy-zeta max eta " +
             fmt(eta_magnitude, 3) + "; max uniform dev " +
             fmt(max_uniform_dev, 3) + "]");
  CHECK(surrogate_dev <= 1e-3);
  CHECK(eta_magnitude <= 1e-3);
  CHECK(max_uniform_dev <= 1e-6);
}

TEST_CASE("acceptance 5: multi-model improvement") {
  const auto start = Clock::now();

  const double rmse_full = ensemble_rmse(mme_full());
  const double rmse_single = ensemble_rmse(mme_single());
  const double rmse_fixed = ensemble_rmse(mme_fixed());
  const double rmse_equal = ensemble_rmse(mme_equal());

  // Best single member: the strongest single-weather-model pipeline with
  // one linear power model, taken from the uniform baseline's members.
  const std::vector<double> singles = member_rmses(mme_equal());
  const double rmse_best_single =
      *std::min_element(singles.begin(), singles.end());

  const double elapsed = seconds_since(start);
  const double slack = 1.01;
  const bool ordered = rmse_full <= slack * rmse_single &&
                       rmse_single <= slack * rmse_fixed &&
                       rmse_fixed <= slack * rmse_equal &&
                       rmse_equal <= slack * rmse_best_single;
  const bool pass = ordered && elapsed < 120.0;
  report(5, "multi-model improvement", pass,
         "[RMSE full " + fmt(rmse_full) + " <= single " + fmt(rmse_single) +
             " <= fixed " + fmt(rmse_fixed) + " <= equal " + fmt(rmse_equal) +
             " <= best member " + fmt(rmse_best_single) + " (1% slack); " +
             fmt(elapsed, 3) + "s]");
  CHECK(rmse_full <= slack * rmse_single);
  CHECK(rmse_single <= slack * rmse_fixed);
  CHECK(rmse_fixed <= slack * rmse_equal);
  CHECK(rmse_equal <= slack * rmse_best_single);
  CHECK(elapsed < 120.0);
}

TEST_CASE("acceptance 6: lead-time gating") {
  const Fitted& with = intraday_with_persistence();
  const int persistence_model = 3;  // third power model in the fitted order

  const auto persistence_share = [&](int lead) {
    double total = 0.0;
    int rows = 0;
    for (const AlignedRow& row : with.test) {
      if (row.lead != lead) continue;
      const Prediction prediction =
          predict_csge(with.fit.state, with.fit.forecasters, row);
      for (int wx = 1; wx <= with.weather_models(); ++wx) {
        total += prediction.weights[flat_index({wx, persistence_model},
                                               with.power_models()) - 1];
      }
      ++rows;
    }
    REQUIRE(rows > 0);
    return total / rows;
  };
  const double share_first = persistence_share(1);
  const double share_last = persistence_share(24);

  const double rmse_with = ensemble_rmse(with, 2);
  const double rmse_without = ensemble_rmse(intraday_without_persistence(), 2);

  const bool pass =
      share_first >= 2.0 * share_last && rmse_with <= rmse_without;
  report(6, "lead-time gating", pass,
         "[persistence weight k=1 " + fmt(share_first) + " vs k=24 " +
             fmt(share_last) + "; k<=2 RMSE with " + fmt(rmse_with) +
             " vs without " + fmt(rmse_without) + "]");
  CHECK(share_first >= 2.0 * share_last);
  CHECK(rmse_with <= rmse_without);
}

TEST_CASE("acceptance 7: weak-model robustness") {
  const double gated_two = ensemble_rmse(sweep_two());
  const double gated_three = ensemble_rmse(sweep_three());
  const double equal_two = equal_weight_rmse(sweep_two());
  const double equal_three = equal_weight_rmse(sweep_three());

  const double gated_delta = (gated_three - gated_two) / gated_two;
  const double equal_delta = (equal_three - equal_two) / equal_two;

  const bool pass = gated_three <= 1.01 * gated_two && equal_three > equal_two;
  report(7, "weak-model robustness", pass,
         "[gated RMSE delta " + fmt(100.0 * gated_delta, 3) +
             "% (limit +1%); equal-weight delta " +
             fmt(100.0 * equal_delta, 3) + "% (must increase)]");
  CHECK(gated_three <= 1.01 * gated_two);
  CHECK(equal_three > equal_two);
}

TEST_CASE("acceptance 8: member-dropout robustness") {
  struct DropStats {
    std::string label;
    const Fitted* fitted;
    std::vector<double> mean_weight;   ///< per member, full ensemble
    double mean_full = 0.0;            ///< mean prediction, full ensemble
    std::vector<double> mean_dropped;  ///< mean prediction without member j
  };

  int bad_rows = 0;
  double max_sum_dev = 0.0;
  std::vector<DropStats> stats;
  for (const auto& [label, fitted] :
       std::initializer_list<std::pair<const char*, const Fitted*>>{
           {"day-ahead", &mme_full()}, {"sweep", &sweep_three()}}) {
    DropStats s{label, fitted, {}, 0.0, {}};
    const int members = fitted->weather_models() * fitted->power_models();
    s.mean_weight.assign(members, 0.0);
    s.mean_dropped.assign(members, 0.0);

    for (const AlignedRow& row : fitted->test) {
      const Prediction full =
          predict_csge(fitted->fit.state, fitted->fit.forecasters, row);
      s.mean_full += full.value;
      for (int j = 0; j < members; ++j) s.mean_weight[j] += full.weights[j];
    }
    const double rows = static_cast<double>(fitted->test.size());
    s.mean_full /= rows;
    for (double& w : s.mean_weight) w /= rows;

    for (int j = 0; j < members; ++j) {
      std::vector<bool> dropped(members, false);
      dropped[j] = true;
      double mean = 0.0;
      for (const AlignedRow& row : fitted->test) {
        const Prediction p = predict_csge(fitted->fit.state,
                                          fitted->fit.forecasters, row, dropped);
        if (!std::isfinite(p.value)) ++bad_rows;
        double sum = 0.0;
        for (double w : p.weights) {
          if (!std::isfinite(w)) ++bad_rows;
          sum += w;
        }
        max_sum_dev = std::max(max_sum_dev, std::abs(sum - 1.0));
        mean += p.value;
      }
      s.mean_dropped[j] = mean / rows;
    }
    stats.push_back(std::move(s));
  }

  // Dropping a member the gate already ignores barely moves the forecast.
  int weak_members = 0;
  double max_weak_shift = 0.0;
  double min_mean_weight = 1.0;
  for (const DropStats& s : stats) {
    for (std::size_t j = 0; j < s.mean_weight.size(); ++j) {
      min_mean_weight = std::min(min_mean_weight, s.mean_weight[j]);
      if (s.mean_weight[j] < 0.05) {
        ++weak_members;
        max_weak_shift = std::max(
            max_weak_shift, std::abs(s.mean_dropped[j] - s.mean_full));
      }
    }
  }

  const bool weak_ok = weak_members == 0 || max_weak_shift < 0.02;
  const bool pass = bad_rows == 0 && max_sum_dev <= 1e-9 && weak_ok;
  const std::string weak_detail =
      weak_members == 0
          ? std::string("no member below 0.05 (min mean weight ") +
                fmt(min_mean_weight, 3) + ")"
          : std::to_string(weak_members) + " weak members, max mean shift " +
                fmt(max_weak_shift, 3);
  report(8, "member-dropout robustness", pass,
         "[every single-member drop on day-ahead and sweep: non-finite rows " +
             std::to_string(bad_rows) + ", max |sum-1| " +
             fmt(max_sum_dev, 3) + "; " + weak_detail + "]");
  CHECK(bad_rows == 0);
  CHECK(max_sum_dev <= 1e-9);
  CHECK(weak_ok);
}

TEST_CASE("acceptance 9: convexity and normalization") {
  double max_sum_dev = 0.0;
  int range_violations = 0;
  long long rows_checked = 0;
  for (const Fitted* fitted :
       {&pme(), &mme_full(), &intraday_with_persistence(), &sweep_three()}) {
    for (const AlignedRow& row : fitted->test) {
      const Prediction prediction =
          predict_csge(fitted->fit.state, fitted->fit.forecasters, row);
      double sum = 0.0;
      for (double w : prediction.weights) sum += w;
      max_sum_dev = std::max(max_sum_dev, std::abs(sum - 1.0));

      const auto values =
          member_values(fitted->fit.forecasters, fitted->weather_models(),
                        fitted->power_models(), row);
      double low = std::numeric_limits<double>::infinity();
      double high = -low;
      for (const auto& value : values) {
        if (value.has_value()) {
          low = std::min(low, *value);
          high = std::max(high, *value);
        }
      }
      if (prediction.value < low - 1e-12 || prediction.value > high + 1e-12) {
        ++range_violations;
      }
      ++rows_checked;
    }
  }

  const bool pass = max_sum_dev <= 1e-9 && range_violations == 0;
  report(9, "convexity and normalization", pass,
         "[4 scenarios, " + std::to_string(rows_checked) +
             " rows; max |sum-1| " + fmt(max_sum_dev, 3) +
             "; range violations " + std::to_string(range_violations) + "]");
  CHECK(max_sum_dev <= 1e-9);
  CHECK(range_violations == 0);
}

TEST_CASE("acceptance 10: end-to-end determinism") {
  const fs::path scratch = fs::temp_directory_path() / "csge_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const fs::path data = scratch / "data";
  const fs::path config = data / "config.json";

  REQUIRE(run_cli(scratch, "synth-gen --scenario pme-single --out " +
                               data.string() + " --origins 600") == 0);

  const std::array<fs::path, 2> runs{scratch / "run1", scratch / "run2"};
  for (const fs::path& run : runs) {
    REQUIRE(run_cli(scratch, "train --config " + config.string() + " --out " +
                                 run.string()) == 0);
    REQUIRE(run_cli(scratch, "evaluate --bundle " +
                                 (run / "bundle.bin").string() + " --data " +
                                 (data / "model_1.csv").string() + " --out " +
                                 (run / "eval").string()) == 0);
  }

  const std::string scores = read_file(runs[0] / "eval" / "scores.csv");
  REQUIRE(scores.rfind("metric,dataset", 0) == 0);  // real, non-empty table
  const bool bundle_same = read_file(runs[0] / "bundle.bin") ==
                           read_file(runs[1] / "bundle.bin");
  const bool scores_same =
      scores == read_file(runs[1] / "eval" / "scores.csv");
  const bool forecasts_same = read_file(runs[0] / "forecasts.csv") ==
                              read_file(runs[1] / "forecasts.csv");
  const bool report_same = read_file(runs[0] / "fit_report.json") ==
                           read_file(runs[1] / "fit_report.json");

  const bool pass = bundle_same && scores_same && forecasts_same && report_same;
  report(10, "end-to-end determinism", pass,
         std::string("[two seeded train+evaluate runs: bundle ") +
             (bundle_same ? "identical" : "differs") + ", score table " +
             (scores_same ? "identical" : "differs") + ", forecasts " +
             (forecasts_same ? "identical" : "differs") + ", report " +
             (report_same ? "identical" : "differs") + "]");
  CHECK(bundle_same);
  CHECK(scores_same);
  CHECK(forecasts_same);
  CHECK(report_same);
}
