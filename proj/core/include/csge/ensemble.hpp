#pragma once

// Fusing member forecasts into one prediction: each member's weight is the
// product of its global, local, and lead-time factors at the two model
// levels, normalized over the members that are actually available. Members
// can drop out at prediction time; the remaining weights renormalize.

#include <optional>
#include <span>
#include <vector>

#include "csge/core.hpp"
#include "csge/forecasters.hpp"
#include "csge/weighting.hpp"

namespace csge {

/// A single member's forecast for one (origin, lead).
struct MemberForecast {
  MemberId member;
  std::optional<double> value;  ///< unset marks an unavailable member
  int lead = 0;
  const std::vector<double>* features_used = nullptr;
};

/// Per-member weight factors of one prediction, for weight-trace output.
struct MemberDiagnostics {
  MemberId member;
  bool available = false;
  double global_weather = 0.0;
  double local_weather = 0.0;
  double lead_weather = 0.0;
  double global_power = 0.0;
  double local_power = 0.0;
  double lead_power = 0.0;
  double raw_product = 0.0;
  double weight = 0.0;
  std::optional<double> value;
};

struct Prediction {
  double value = 0.0;
  /// Normalized weights by flat member index; unavailable members hold 0.
  std::vector<double> weights;
  std::vector<MemberDiagnostics> members;
  /// Set when every raw product vanished and the available members were
  /// weighted uniformly instead.
  bool uniform_fallback = false;
};

/// The two unnormalized three-factor products for one member: the weather
/// level product and the power level product. local_q[weather][power] must
/// cover every member. Throws std::invalid_argument on an unfitted state.
std::pair<double, double> member_weight_raw(
    const WeightState& state, MemberId member, int lead,
    const std::vector<std::vector<double>>& local_q);

/// Scales the raw per-member products to sum to 1 over available members;
/// unavailable members receive 0. When every available product is zero the
/// weight is split uniformly and *uniform_fallback is set. Throws
/// std::invalid_argument when no member is available or the lengths differ.
std::vector<double> normalize_weights(std::span<const double> raw_products,
                                      const std::vector<bool>& available,
                                      bool* uniform_fallback = nullptr);

/// Weighted sum of the available member forecasts. The result is a convex
/// combination: it lies within the range spanned by the available values.
double combine(const std::vector<MemberForecast>& forecasts,
               std::span<const double> weights);

/// Evaluates every base forecaster for one (origin, lead). Members are
/// unavailable when dropped, when their weather model's features are
/// missing, or (persistence) when no recent power measurement exists.
/// dropped may be empty or hold one flag per flat member index.
std::vector<std::optional<double>> member_values(
    const std::vector<ForecasterState>& forecasters, int weather_models,
    int power_models, const AlignedRow& row,
    const std::vector<bool>& dropped = {});

/// Reusable buffers for assemble_prediction; one instance per thread.
struct EnsembleScratch {
  std::vector<double> raw;
  std::vector<double> tuple;
  std::vector<double> gate;
  std::vector<double> local_weather;
  std::vector<double> local_power;
  std::vector<int> tuple_members;
};

/// Computes the local (weather-situation) gating factors for one forecast
/// row into scratch.local_weather (per weather model) and
/// scratch.local_power (per flat member): each weather model's available
/// power models are gated on their neighborhood quality, and the weather
/// models on their mean quality. With both local exponents zero the factors
/// are uniform over the available sets and local_q is never consulted.
/// local_q holds one entry per weather model and may be null for models
/// without an available member. Entries for unavailable members are 0.
void local_gate_factors(const WeightState& state,
                        const std::vector<const std::vector<double>*>& local_q,
                        const std::vector<std::optional<double>>& values,
                        EnsembleScratch& scratch);

/// Weight assembly from member values and precomputed local factors (as
/// produced by local_gate_factors): multiplies the global, local, and
/// lead-time factors at both levels, normalizes over the available
/// members, and returns the combined forecast. The factors of one row
/// depend only on the local exponents, so callers evaluating many exponent
/// vectors can reuse them while those stay fixed. When weights_out and
/// diagnostics are null only the combined value is produced and nothing is
/// allocated.
double assemble_from_factors(const WeightState& state, int lead,
                             const std::vector<std::optional<double>>& values,
                             std::span<const double> local_weather,
                             std::span<const double> local_power,
                             EnsembleScratch& scratch,
                             std::vector<double>* weights_out = nullptr,
                             std::vector<MemberDiagnostics>* diagnostics = nullptr,
                             bool* uniform_fallback = nullptr);

/// Core weight assembly from precomputed member outputs: local_gate_factors
/// followed by assemble_from_factors. local_q holds one entry per weather
/// model (the per-power-model mean absolute neighborhood errors); an entry
/// may be null when the weather model is entirely unavailable, or for every
/// model when both local exponents are zero (the local factors are then
/// uniform and no store query is needed). When weights_out/diagnostics are
/// null only the combined value is produced; the function never allocates
/// through the scratch in that mode.
double assemble_prediction(const WeightState& state, int lead,
                           const std::vector<const std::vector<double>*>& local_q,
                           const std::vector<std::optional<double>>& values,
                           EnsembleScratch& scratch,
                           std::vector<double>* weights_out = nullptr,
                           std::vector<MemberDiagnostics>* diagnostics = nullptr,
                           bool* uniform_fallback = nullptr);

/// Full prediction for one (origin, lead): runs the base forecasters,
/// queries the historic stores for local quality, assembles and normalizes
/// the weights, and combines the member values. Throws std::runtime_error
/// when no member is available.
Prediction predict_csge(const WeightState& state,
                        const std::vector<ForecasterState>& forecasters,
                        const AlignedRow& row,
                        const std::vector<bool>& dropped = {});

}  // namespace csge
