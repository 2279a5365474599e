#pragma once

// Everything that crosses the filesystem boundary: CSV dataset ingestion
// with filtering and min-max normalization, experiment configuration files,
// versioned binary bundles of trained state, and the CSV reports (score
// tables, weight traces, forecasts). All writers go through a temp-file +
// rename so readers never observe partial output.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csge/core.hpp"
#include "csge/ensemble.hpp"
#include "csge/forecasters.hpp"
#include "csge/metrics.hpp"
#include "csge/training.hpp"
#include "csge/weighting.hpp"

namespace csge {

/// Parses "YYYY-MM-DDThh:mm:ssZ" (UTC) to epoch seconds; strict, no other
/// forms. Throws std::invalid_argument naming the malformed text.
std::int64_t parse_timestamp(const std::string& text);

/// Inverse of parse_timestamp.
std::string format_timestamp(std::int64_t epoch_seconds);

/// Per-file ingestion accounting.
struct FileIngest {
  std::string path;
  std::size_t rows_read = 0;     ///< data rows in the file
  std::size_t rows_kept = 0;
  std::size_t dropped_power = 0;      ///< power outside [-0.01, 1.05]
  std::size_t dropped_parse = 0;      ///< unparseable field or column count
  std::size_t dropped_lead = 0;       ///< lead outside the grid
  std::size_t dropped_duplicate = 0;  ///< repeated (origin, lead) key
};

struct IngestReport {
  std::vector<FileIngest> files;
  /// Records whose origin-time power measurement could not be derived from
  /// any target time present in the data (typically the earliest origins).
  std::size_t recent_power_missing = 0;
};

/// Reads one CSV per weather model (position = 1-based model index). Each
/// file carries a mandatory header row and nine columns: target timestamp,
/// lead hours, six weather features, measured power. The timestamp is the
/// target validity time; the origin is recovered as target - lead * delta.
/// Power is filtered to [-0.01, 1.05] then clipped to [0, 1]; the power
/// measured at each origin is attached where some row's target supplies
/// it. Features stay raw — normalize with fit/apply_normalization before
/// training. Throws on unreadable files or malformed headers with
/// file/line context.
DataSet ingest(const std::vector<std::string>& paths, const LeadGrid& grid,
               IngestReport* report = nullptr);

/// Per-(weather model, feature) min-max ranges.
struct FeatureNormalization {
  std::vector<std::vector<double>> lo;  ///< [weather][dim]
  std::vector<std::vector<double>> hi;
};

/// Ranges over the records of the given origins (pass the training origins
/// so test data never leaks into the scaling). Throws when a weather model
/// has no records among them.
FeatureNormalization fit_normalization(const DataSet& raw,
                                       const std::vector<std::int64_t>& origins);

/// Rescales every feature to [0,1], clipping out-of-range values; a
/// degenerate dimension (lo == hi) maps to 0. The result revalidates under
/// FeatureRangeCheck::enforce.
DataSet apply_normalization(const DataSet& raw,
                            const FeatureNormalization& normalization);

/// Maps a normalized value back to the raw scale (exact up to rounding for
/// in-range inputs; degenerate dimensions return lo).
double denormalize(const FeatureNormalization& normalization,
                   int weather_model, int dim, double value);

/// A trained artifact: weight state, base forecasters, and the feature
/// scaling they expect.
struct Bundle {
  WeightState state;
  std::vector<ForecasterState> forecasters;  ///< by flat member index
  FeatureNormalization normalization;
};

/// Binary, versioned, byte-stable serialization: equal bundles produce
/// equal files, and a round trip reproduces predictions bit-exactly.
/// save_bundle writes atomically. load_bundle rejects wrong magic bytes,
/// version mismatches (naming expected and found), and truncated or
/// oversized payloads, leaving no partial state.
void save_bundle(const Bundle& bundle, const std::string& path);
Bundle load_bundle(const std::string& path);

struct WeatherSource {
  std::string label;
  std::string path;
};

/// One experiment end to end: inputs, model grid, split, training
/// settings, and where outputs go. Serialized as JSON with every training
/// field defaulted, so a minimal file only names the data.
struct ExperimentConfig {
  std::vector<WeatherSource> weather_models;
  std::vector<ForecasterKind> power_models{ForecasterKind::linear_regression,
                                           ForecasterKind::knn_regressor};
  LeadGrid grid{1, 24, 3600};
  SplitPlan split;
  TrainConfig train;
  std::string output_dir = "out";
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

/// Writes content to path via a temp file and rename, creating parent
/// directories as needed.
void write_text_atomic(const std::string& path, const std::string& content);

/// Writes one weather model's records (primary rows only) in the ingestion
/// CSV schema; requires that model's feature dimensionality to be six.
void write_dataset_csv(const DataSet& data, int weather_model,
                       const std::string& path);

/// One scored prediction with its weight diagnostics.
struct TracePrediction {
  std::int64_t origin = 0;
  int lead = 0;
  Prediction prediction;
};

/// One row per member per prediction: the six weight factors, the raw
/// product, the normalized weight, the member value, and the ensemble
/// value, keyed by (origin time, lead, weather model, power model).
void write_weight_trace(const std::vector<TracePrediction>& predictions,
                        const std::string& path);

struct ForecastRow {
  std::int64_t origin = 0;
  int lead = 0;
  double prediction = 0.0;
  std::optional<double> observation;
};

void write_forecasts_csv(const std::vector<ForecastRow>& rows,
                         const std::string& path);

/// Renders the score table with its aggregate footer rows (Avg., Std.,
/// Skill vs the baseline on the averages, SkillMean as the mean of
/// per-dataset skills, #Wins) for both RMSE and — where defined — R².
std::string render_score_table(const ScoreTable& table,
                               const std::string& baseline_method);
void write_score_table(const ScoreTable& table,
                       const std::string& baseline_method,
                       const std::string& path);

/// Renders the training report as JSON (candidates, chosen exponents,
/// evaluation counters, notes).
std::string render_fit_report(const FitReport& report);

}  // namespace csge
