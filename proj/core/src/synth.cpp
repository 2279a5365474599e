#include "csge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace csge {

namespace {

// 2020-01-01T00:00:00Z; origin t maps to this plus t * delta_seconds.
constexpr std::int64_t kEpochBase = 1577836800;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

// Uniform in [0, 1) from the top 53 bits of the generator.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on explicit uniform draws, so the stream
// is identical across standard library implementations. Always consumes
// exactly two generator values.
double gaussian(std::mt19937_64& rng) {
  const double u1 = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

// Mixing coefficient of nuisance dimension d (1-based within the nuisance
// block) toward the wind forecast.
double nuisance_mix(int d) {
  if (d == 1) return 0.9;
  if (d <= 3) return 0.3;
  return 0.2;
}

void validate(const ScenarioSpec& spec) {
  spec.grid.validate();
  if (spec.n_origins < 1) {
    throw std::invalid_argument("scenario needs at least one origin");
  }
  if (!(spec.ar_coefficient > 0.0 && spec.ar_coefficient < 1.0)) {
    throw std::invalid_argument("AR coefficient must lie in (0, 1)");
  }
  if (!(spec.innovation_scale > 0.0)) {
    throw std::invalid_argument("innovation scale must be > 0");
  }
  if (spec.weather_models.empty()) {
    throw std::invalid_argument("scenario needs at least one weather model");
  }
  for (const WeatherModelSpec& model : spec.weather_models) {
    if (!(model.noise_scale >= 0.0) || !(model.noise_growth >= 0.0)) {
      throw std::invalid_argument("noise scales must be >= 0");
    }
  }
  if (!(spec.power_rated > spec.power_cut_in)) {
    throw std::invalid_argument("rated wind must exceed cut-in wind");
  }
  if (spec.feature_dims < 1) {
    throw std::invalid_argument("feature dimensionality must be >= 1");
  }
}

std::vector<double> draw_latent(const ScenarioSpec& spec,
                                std::mt19937_64& rng) {
  const int total = spec.n_origins + spec.grid.k_max;
  const double rho = spec.ar_coefficient;
  const double s = spec.innovation_scale;
  std::vector<double> z(total);
  z[0] = s / std::sqrt(1.0 - rho * rho) * gaussian(rng);
  for (int t = 1; t < total; ++t) {
    z[t] = rho * z[t - 1] + s * gaussian(rng);
  }
  return z;
}

}  // namespace

std::vector<double> latent_path(const ScenarioSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.rng_seed);
  return draw_latent(spec, rng);
}

std::vector<double> latent_wind(const ScenarioSpec& spec) {
  std::vector<double> z = latent_path(spec);
  for (double& value : z) value = logistic(value);
  return z;
}

double power_curve(const ScenarioSpec& spec, double wind) {
  const double mid = 0.5 * (spec.power_cut_in + spec.power_rated);
  // Steepness placing ~5% / ~95% of the unnormalized curve at cut-in and
  // rated wind respectively.
  const double steep =
      2.0 * std::log(19.0) / (spec.power_rated - spec.power_cut_in);
  const double lo = logistic(steep * (0.0 - mid));
  const double hi = logistic(steep * (1.0 - mid));
  return (logistic(steep * (wind - mid)) - lo) / (hi - lo);
}

DataSet generate(const ScenarioSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.rng_seed);
  const std::vector<double> z = draw_latent(spec, rng);

  const int total = static_cast<int>(z.size());
  std::vector<double> wind(total);
  std::vector<double> power(total);
  for (int t = 0; t < total; ++t) {
    wind[t] = logistic(z[t]);
    power[t] = power_curve(spec, wind[t]);
  }

  const int models = static_cast<int>(spec.weather_models.size());
  const int leads = spec.grid.lead_count();
  std::vector<ForecastRecord> records;
  records.reserve(static_cast<std::size_t>(models) * spec.n_origins * leads);

  // Weather models draw in sequence, so truncating the model list leaves
  // the remaining models' records bit-identical.
  for (int m = 0; m < models; ++m) {
    const WeatherModelSpec& model = spec.weather_models[m];
    for (int t = 0; t < spec.n_origins; ++t) {
      for (int k = spec.grid.k_min; k <= spec.grid.k_max; ++k) {
        const double truth = wind[t + k];
        const double sd = model.noise_scale * (1.0 + model.noise_growth * k);
        ForecastRecord record;
        record.origin = kEpochBase + static_cast<std::int64_t>(t) *
                                         spec.grid.delta_seconds;
        record.lead = k;
        record.weather_model = m + 1;
        record.features.resize(spec.feature_dims);
        const double forecast = clip01(truth + model.bias + sd * gaussian(rng));
        record.features[0] = forecast;
        for (int d = 1; d < spec.feature_dims; ++d) {
          const double mix = nuisance_mix(d);
          record.features[d] =
              clip01(mix * forecast + (1.0 - mix) * uniform01(rng));
        }
        record.observation = power[t + k];
        record.recent_power_at_origin = power[t];
        records.push_back(std::move(record));
      }
    }
  }

  return make_dataset(std::move(records), spec.grid, models,
                      std::vector<int>(models, spec.feature_dims),
                      FeatureRangeCheck::enforce);
}

std::vector<ScenarioSpec> scenario_catalog() {
  std::vector<ScenarioSpec> catalog;

  {
    ScenarioSpec spec;
    spec.name = "pme-single";
    spec.rng_seed = 1101;
    spec.n_origins = 3000;
    spec.ar_coefficient = 0.97;
    spec.innovation_scale = std::sqrt(1.0 - 0.97 * 0.97);
    spec.weather_models = {WeatherModelSpec{0.0, 0.05, 0.04}};
    catalog.push_back(std::move(spec));
  }
  {
    ScenarioSpec spec;
    spec.name = "mme-day-ahead";
    spec.rng_seed = 2202;
    spec.n_origins = 5000;
    spec.ar_coefficient = 0.97;
    spec.innovation_scale = std::sqrt(1.0 - 0.97 * 0.97);
    spec.weather_models = {WeatherModelSpec{0.0, 0.05, 0.04},
                           WeatherModelSpec{0.01, 0.07, 0.04},
                           WeatherModelSpec{-0.015, 0.09, 0.04}};
    catalog.push_back(std::move(spec));
  }
  {
    ScenarioSpec spec;
    spec.name = "intraday-lagged";
    spec.rng_seed = 3303;
    spec.n_origins = 3000;
    spec.ar_coefficient = 0.99;
    spec.innovation_scale = std::sqrt(1.0 - 0.99 * 0.99);
    spec.weather_models = {WeatherModelSpec{0.0, 0.05, 0.04},
                           WeatherModelSpec{0.01, 0.07, 0.04},
                           WeatherModelSpec{-0.01, 0.09, 0.04},
                           WeatherModelSpec{0.0, 0.015, 0.6}};
    catalog.push_back(std::move(spec));
  }
  {
    ScenarioSpec spec;
    spec.name = "model-count-sweep";
    spec.rng_seed = 4404;
    spec.n_origins = 3000;
    spec.ar_coefficient = 0.97;
    spec.innovation_scale = std::sqrt(1.0 - 0.97 * 0.97);
    spec.weather_models = {WeatherModelSpec{0.0, 0.04, 0.04},
                           WeatherModelSpec{0.005, 0.05, 0.04},
                           WeatherModelSpec{0.0, 0.12, 0.04}};
    catalog.push_back(std::move(spec));
  }

  return catalog;
}

ScenarioSpec scenario_by_name(const std::string& name) {
  std::vector<ScenarioSpec> catalog = scenario_catalog();
  std::string known;
  for (ScenarioSpec& spec : catalog) {
    if (spec.name == name) return std::move(spec);
    if (!known.empty()) known += ", ";
    known += spec.name;
  }
  throw std::invalid_argument("unknown scenario \"" + name +
                              "\"; known scenarios: " + known);
}

}  // namespace csge
