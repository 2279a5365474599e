#pragma once

// Shared domain types for multi-model power forecasting: lead-time grids,
// ensemble member identity, forecast records, and observation-aligned views.

#include <cstdint>
#include <optional>
#include <vector>

namespace csge {

/// Inclusive range of integer lead times with a fixed step duration.
/// A forecast issued at origin t for lead k targets time t + k * delta_seconds.
struct LeadGrid {
  int k_min = 1;
  int k_max = 1;
  std::int64_t delta_seconds = 3600;

  int lead_count() const { return k_max - k_min + 1; }
  bool contains(int k) const { return k >= k_min && k <= k_max; }

  /// Zero-based position of lead k in per-lead arrays. Throws when k is
  /// outside the grid.
  int index_of(int k) const;

  /// Throws std::invalid_argument unless 0 <= k_min <= k_max and
  /// delta_seconds > 0.
  void validate() const;

  friend bool operator==(const LeadGrid&, const LeadGrid&) = default;
};

/// Identity of one ensemble member: a weather model paired with a power
/// model. Both indices are 1-based.
struct MemberId {
  int weather_model = 1;  ///< psi in 1..Psi
  int power_model = 1;    ///< phi in 1..Phi

  friend bool operator==(const MemberId&, const MemberId&) = default;
};

/// Flattens (weather_model, power_model) to a 1-based member index
/// j = (psi - 1) * Phi + phi. Throws std::invalid_argument when either
/// index is out of range.
int flat_index(MemberId id, int power_model_count);

/// Inverse of flat_index.
MemberId member_from_flat(int j, int power_model_count);

/// One forecast row: the issuing origin time, lead, weather model, the
/// model's feature vector for the target time, and the measured power at
/// the target time when known. Missing measurements are represented
/// explicitly, never as sentinel numbers.
struct ForecastRecord {
  std::int64_t origin = 0;  ///< UTC epoch seconds of the forecast origin
  int lead = 0;             ///< integer lead steps ahead of the origin
  int origin_lag = 0;       ///< > 0 marks a time-lagged duplicate forecast
  int weather_model = 1;    ///< 1-based weather-model index
  std::vector<double> features;  ///< normalized predictors, each in [0,1]
  std::optional<double> observation;  ///< measured power in [0,1]
  std::optional<double> recent_power_at_origin;  ///< power measured at origin
};

/// Immutable collection of forecast records sorted by (origin, lead).
/// Construct through make_dataset, which validates and sorts.
struct DataSet {
  std::vector<ForecastRecord> records;
  LeadGrid grid;
  int weather_models = 1;
  std::vector<int> feature_dims;  ///< per weather model

  /// Sorted distinct forecast origins present in the records.
  std::vector<std::int64_t> origins() const;
};

enum class FeatureRangeCheck { enforce, skip };

/// Validates records against the grid and per-model feature dimensions,
/// sorts them by (origin, lead), and rejects duplicate
/// (origin, lead, weather_model, origin_lag) keys. With
/// FeatureRangeCheck::enforce (the default), every feature must lie in
/// [0,1]; raw un-normalized data can be staged with ::skip.
DataSet make_dataset(std::vector<ForecastRecord> records, LeadGrid grid,
                     int weather_models, std::vector<int> feature_dims,
                     FeatureRangeCheck range_check = FeatureRangeCheck::enforce);

/// One (origin, lead) slice with every weather model's feature vector and
/// the non-missing observation. Feature pointers refer into the source
/// DataSet and stay valid for its lifetime; a null pointer marks a weather
/// model with no usable row at this (origin, lead).
struct AlignedRow {
  std::int64_t origin = 0;
  int lead = 0;
  std::vector<const std::vector<double>*> features;  ///< per weather model
  double observation = 0.0;
  std::optional<double> recent_power;
};

/// Groups records of the given lead by origin, keeping only origins whose
/// observation is known. Only primary rows (origin_lag == 0) participate;
/// lagged rows are reserved for time-lagged ensemble extensions. The number
/// of returned rows is the per-lead sample count N' used by lead-dependent
/// error statistics. An empty result is valid.
std::vector<AlignedRow> align(const DataSet& data, int lead);

/// align() for every lead of the grid, ordered by (origin, lead).
std::vector<AlignedRow> align_all(const DataSet& data);

}  // namespace csge
