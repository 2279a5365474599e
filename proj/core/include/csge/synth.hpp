#pragma once

// Synthetic wind-power scenarios: a shared latent wind path drives true
// power through a logistic turbine curve, and each simulated weather model
// observes that path through its own bias and lead-dependent noise. The
// generator is deterministic per seed, so scenarios double as test
// fixtures.

#include <cstdint>
#include <string>
#include <vector>

#include "csge/core.hpp"

namespace csge {

/// One simulated weather model's error characteristics. The wind-speed
/// feature for a forecast at lead k is the true wind plus bias plus
/// Gaussian noise with standard deviation noise_scale * (1 + noise_growth
/// * k), so noise_growth > 0 degrades the model with the horizon.
struct WeatherModelSpec {
  double bias = 0.0;
  double noise_scale = 0.05;
  double noise_growth = 0.0;
};

struct ScenarioSpec {
  std::string name;
  std::uint64_t rng_seed = 1;
  int n_origins = 1000;
  LeadGrid grid{1, 24, 3600};

  /// Latent wind: z follows an AR(1) process with this coefficient and
  /// innovation scale, started from its stationary distribution; the wind
  /// level is logistic(z), kept in (0, 1).
  double ar_coefficient = 0.97;
  double innovation_scale = 0.25;

  std::vector<WeatherModelSpec> weather_models{WeatherModelSpec{}};

  /// Logistic power curve: output stays near 0 below cut_in wind, rises
  /// through the midpoint of [cut_in, rated], and saturates above rated;
  /// rescaled so wind 0 maps to power 0 and wind 1 to power 1.
  double power_cut_in = 0.2;
  double power_rated = 0.7;

  /// Feature dimensionality per weather model: dimension 0 is the wind
  /// forecast, the rest are correlated nuisance dimensions.
  int feature_dims = 6;
};

/// The AR(1) path z_0..z_{n_origins + k_max - 1}; index t is the latent
/// state at origin time step t.
std::vector<double> latent_path(const ScenarioSpec& spec);

/// logistic(latent_path): the true wind level per time step.
std::vector<double> latent_wind(const ScenarioSpec& spec);

/// Normalized logistic turbine curve of the spec; monotone, with
/// power_curve(spec, 0) == 0 and power_curve(spec, 1) == 1.
double power_curve(const ScenarioSpec& spec, double wind);

/// Full synthetic dataset: one record per (weather model, origin, lead)
/// with the target-time observation and the origin-time power measurement
/// attached. Bit-identical for equal specs.
DataSet generate(const ScenarioSpec& spec);

/// The four named study scenarios with fixed seeds: "pme-single" (one
/// weather model, several power models), "mme-day-ahead" (three weather
/// models of graded quality), "intraday-lagged" (three day-ahead models
/// plus an intraday model that is sharp at short leads and degrades fast),
/// and "model-count-sweep" (two good models plus a third with 3x the noise
/// of the best).
std::vector<ScenarioSpec> scenario_catalog();

/// The catalog entry with the given name; throws std::invalid_argument
/// listing the known names when absent.
ScenarioSpec scenario_by_name(const std::string& name);

}  // namespace csge
