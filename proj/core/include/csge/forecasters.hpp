#pragma once

// Base power-forecasting models behind one fit/predict contract. Members of
// the ensemble are fitted independently; their states are immutable after
// fitting and safe to share across threads.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csge/core.hpp"

namespace csge {

enum class ForecasterKind {
  persistence,        ///< returns the power measured at the forecast origin
  linear_regression,  ///< ordinary least squares with intercept
  knn_regressor,      ///< mean target of the nearest standardized neighbors
};

ForecasterKind forecaster_kind_from_string(std::string_view name);
std::string to_string(ForecasterKind kind);

/// One training example for a base forecaster.
struct LabeledRow {
  std::vector<double> features;
  double target = 0.0;
};

/// Immutable fitted state of a base forecaster. Only the fields of the
/// fitted kind are populated.
struct ForecasterState {
  ForecasterKind kind = ForecasterKind::persistence;
  int feature_dims = 0;

  // linear_regression: intercept followed by one coefficient per feature.
  std::vector<double> coefficients;
  bool ridge_fallback = false;  ///< set when the design matrix was rank
                                ///< deficient and a small ridge penalty was
                                ///< applied instead of plain least squares

  // knn_regressor: standardized training features (row major) and targets.
  int neighbor_count = 0;
  std::vector<double> train_features;
  std::vector<double> train_targets;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
};

/// Options for fit(); only the fields relevant to the kind apply.
struct FitOptions {
  int knn_neighbors = 10;
  /// Caps the rows retained by the nearest-neighbor regressor; larger
  /// training sets are thinned with a deterministic stride. 0 disables.
  int knn_max_rows = 20000;
};

/// Fits a forecaster of the given kind. Linear regression requires at least
/// feature_dims + 1 rows and solves least squares with an intercept; a rank
/// deficient design falls back to a ridge penalty of 1e-6 and flags the
/// state. The nearest-neighbor regressor requires at least one row and
/// stores standardized features. Persistence stores nothing. Throws
/// std::invalid_argument on an empty training set (persistence excepted) or
/// inconsistent row dimensions.
ForecasterState fit(ForecasterKind kind, const std::vector<LabeledRow>& rows,
                    const FitOptions& options = {});

/// Evaluates the fitted model on one record, clipping the result to [0,1].
/// Persistence reads record.recent_power_at_origin and returns nullopt when
/// that measurement is missing (the member is unavailable, not in error);
/// the other kinds evaluate the fitted function on record.features.
std::optional<double> predict(const ForecasterState& state,
                              const ForecastRecord& record);

/// Instrumentation: number of predict() calls since process start or the
/// last reset. Thread safe.
std::uint64_t predict_call_count();
void reset_predict_call_count();

}  // namespace csge
