#pragma once

// The three weighting aspects of the ensemble: global skill from overall
// error statistics, local skill from errors of nearby historical weather
// situations, and lead-time-dependent skill from per-lead error profiles.
// Each aspect produces weights for power models (within a weather model)
// and for weather models (aggregated indirectly over their power models).

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "csge/core.hpp"
#include "csge/gating.hpp"

namespace csge {

/// The six gating exponents steering the ensemble, one per aspect and
/// model level.
struct EtaVector {
  /// Order: global power, local power, lead power, global weather,
  /// local weather, lead weather.
  std::array<double, 6> v{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  static constexpr int kGlobalPower = 0;
  static constexpr int kLocalPower = 1;
  static constexpr int kLeadPower = 2;
  static constexpr int kGlobalWeather = 3;
  static constexpr int kLocalWeather = 4;
  static constexpr int kLeadWeather = 5;
  static constexpr int kSize = 6;

  double global_power() const { return v[kGlobalPower]; }
  double local_power() const { return v[kLocalPower]; }
  double lead_power() const { return v[kLeadPower]; }
  double global_weather() const { return v[kGlobalWeather]; }
  double local_weather() const { return v[kLocalWeather]; }
  double lead_weather() const { return v[kLeadWeather]; }

  double sum() const;
  void validate() const;  ///< throws unless every component is >= 0

  static EtaVector zeros();
  static EtaVector ones();

  friend bool operator==(const EtaVector&, const EtaVector&) = default;
};

/// One signed forecast error at a known lead.
struct LeadError {
  int lead = 0;
  double error = 0.0;  ///< forecast minus observation
};

/// Fitted error statistics per ensemble member: the raw signed errors, the
/// overall RMSE, and per-lead RMSE values (missing where a member produced
/// no forecasts at a lead).
struct ErrorLedger {
  LeadGrid grid;
  int weather_models = 0;
  int power_models = 0;
  /// [weather][power]: signed errors with their leads, in insertion order.
  std::vector<std::vector<std::vector<LeadError>>> errors;
  /// [weather][power]: overall RMSE.
  std::vector<std::vector<double>> overall;
  /// [weather][power][lead index]: per-lead RMSE, unset where no samples.
  std::vector<std::vector<std::vector<std::optional<double>>>> per_lead;
};

/// Builds the ledger from per-member error lists indexed by flat member
/// index (see flat_index). Every member must have at least one error.
ErrorLedger make_error_ledger(
    const LeadGrid& grid, int weather_models, int power_models,
    const std::vector<std::vector<LeadError>>& per_member);

/// Gated weights over the power models of one weather model, from the
/// members' overall RMSE values.
std::vector<double> global_power_weights(const ErrorLedger& ledger,
                                         int weather_model, double eta,
                                         double epsilon = kDefaultEpsilon);

/// Gated weights over weather models. A weather model's quality is the mean
/// overall RMSE of its power models.
std::vector<double> global_weather_weights(const ErrorLedger& ledger,
                                           double eta,
                                           double epsilon = kDefaultEpsilon);

/// Relative per-lead quality r[weather][power][lead index]: each lead's
/// RMSE divided by the member's mean RMSE over all leads, so r averages to
/// 1 across the grid. A centered moving average of the given odd width is
/// applied to the per-lead RMSE first when the window exceeds 1; gaps of at
/// most window/2 leads are then filled from their neighborhood. A member
/// with no samples at some lead that cannot be filled raises an error
/// naming the member and lead.
struct LeadProfile {
  LeadGrid grid;
  std::vector<std::vector<std::vector<double>>> r;
};
LeadProfile leadtime_profile(const ErrorLedger& ledger,
                             int smoothing_window = 1);

/// Gated per-lead weights. power[weather][lead index] holds the weights
/// over power models within that weather model; weather[lead index] holds
/// the weights over weather models, gated on the mean r of each weather
/// model's power models.
struct LeadWeightTables {
  std::vector<std::vector<std::vector<double>>> power;
  std::vector<std::vector<double>> weather;
};
LeadWeightTables leadtime_weights(const LeadProfile& profile,
                                  double eta_power, double eta_weather,
                                  double epsilon = kDefaultEpsilon);

/// Result of a nearest-neighbor locality query: per-power-model mean
/// absolute error over the neighborhood, the neighbor row indices, and a
/// flag marking a store smaller than the requested neighborhood.
struct LocalQuality {
  std::vector<double> q;
  std::vector<std::uint32_t> neighbors;
  bool degraded = false;
};

/// Historical weather situations of one weather model with the absolute
/// errors its power models made on them. Features are standardized
/// per dimension; queries reuse the stored statistics. Immutable after
/// construction; queries are safe to run concurrently.
struct HistoricStore {
  int dims = 0;
  int neighbor_count = 30;
  std::vector<double> features;  ///< row-major standardized, rows x dims
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  /// [power model][row]: absolute error.
  std::vector<std::vector<double>> member_abs_errors;

  std::size_t rows() const {
    return dims == 0 ? 0 : features.size() / static_cast<std::size_t>(dims);
  }

  /// Finds the neighbor_count nearest stored rows to the raw (un-
  /// standardized) query by Euclidean distance on standardized features,
  /// breaking distance ties by the lower row index, and returns each power
  /// model's mean absolute error over that shared neighborhood. A store
  /// with fewer rows than neighbor_count uses all rows and flags the
  /// result. Throws on an empty store or a dimension mismatch.
  LocalQuality local_quality(std::span<const double> query) const;
};

/// Per-dimension mean and population standard deviation (zero deviations
/// are replaced by a scale of 1).
void standardization_stats(const std::vector<const std::vector<double>*>& rows,
                           std::vector<double>& mean,
                           std::vector<double>& scale);

/// Builds a store over the given rows. The standardization statistics are
/// supplied by the caller so they can come from a disjoint training set.
HistoricStore make_historic_store(
    const std::vector<const std::vector<double>*>& rows,
    const std::vector<std::vector<double>>& member_abs_errors,
    std::vector<double> mean, std::vector<double> scale, int neighbor_count);

/// Gated local weights from per-weather-model quality vectors
/// q[weather][power]: power weights within each weather model, and weather
/// weights gated on each weather model's mean q.
struct LocalWeights {
  std::vector<std::vector<double>> power;
  std::vector<double> weather;
};
LocalWeights local_weights(const std::vector<std::vector<double>>& q,
                           double eta_power, double eta_weather,
                           double epsilon = kDefaultEpsilon);

/// Everything needed to weight any future forecast: the materialized global
/// and per-lead weight tables for a fixed EtaVector, plus the historic
/// stores backing locality queries at prediction time.
struct WeightState {
  LeadGrid grid;
  int weather_models = 0;
  int power_models = 0;
  EtaVector eta;
  double epsilon = kDefaultEpsilon;
  int smoothing_window = 1;

  std::vector<double> global_weather;               ///< [weather]
  std::vector<std::vector<double>> global_power;    ///< [weather][power]
  std::vector<std::vector<double>> lead_weather;    ///< [lead index][weather]
  /// [weather][lead index][power]
  std::vector<std::vector<std::vector<double>>> lead_power;
  std::vector<HistoricStore> historic;              ///< [weather]

  bool fitted() const { return weather_models > 0; }
};

/// Materializes a weight state from fitted statistics.
WeightState make_weight_state(const ErrorLedger& ledger,
                              std::vector<HistoricStore> stores,
                              const EtaVector& eta, int smoothing_window = 1,
                              double epsilon = kDefaultEpsilon);

/// Materializes only the gating tables (historic stores stay empty) from an
/// overall-RMSE matrix and a lead profile. Suited to contexts that either
/// run without locality factors or supply local quality values externally,
/// such as repeated objective evaluations during exponent optimization.
WeightState make_weight_tables(const LeadGrid& grid,
                               const std::vector<std::vector<double>>& overall,
                               const LeadProfile& profile, const EtaVector& eta,
                               int smoothing_window = 1,
                               double epsilon = kDefaultEpsilon);

}  // namespace csge
