#pragma once

// End-to-end fitting: a chronological train/test split with origin-level
// cross-validation folds, the regularized ensemble objective evaluated on
// precomputed member forecasts, a bounded derivative-free search run
// greedily over the six gating exponents, and fit_csge tying it together.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csge/core.hpp"
#include "csge/forecasters.hpp"
#include "csge/weighting.hpp"

namespace csge {

/// How forecast origins are divided. The test set is the chronological
/// tail; the remaining origins are shuffled once (seeded) into `folds`
/// near-equal blocks. Fold f validates on block f, optimizes the exponents
/// on block (f+1) mod folds, and fits base models on the rest, giving the
/// 3/5 : 1/5 : 1/5 role split at the default fold count.
struct SplitPlan {
  double test_fraction = 0.2;
  int folds = 5;
  std::uint64_t rng_seed = 1;
};

/// Origin sets of one fold; each vector is sorted ascending.
struct FoldRoles {
  std::vector<std::int64_t> parameter;
  std::vector<std::int64_t> optimization;
  std::vector<std::int64_t> validation;
};

struct SplitResult {
  std::vector<std::int64_t> train;  ///< sorted; union of every fold's roles
  std::vector<std::int64_t> test;   ///< sorted chronological tail
  std::vector<FoldRoles> folds;
};

/// Splits the dataset's origins per the plan. Deterministic given the
/// seed. Throws std::invalid_argument when a role would be empty, naming
/// the origin and fold counts.
SplitResult split(const DataSet& data, const SplitPlan& plan);

struct TrainConfig {
  /// Exponent-sum regularization strength; unset selects the best value
  /// from zeta_grid by mean validation RMSE.
  std::optional<double> zeta;
  std::vector<double> zeta_grid{0.0, 0.001, 0.01, 0.1, 1.0};

  EtaVector eta_init = EtaVector::ones();
  double eta_max = 50.0;

  // Per-stage search tolerances.
  double fn_tol = 1e-6;
  double param_tol = 1e-4;
  int max_iterations = 200;

  int neighbor_count = 30;    ///< locality neighborhood size C
  int smoothing_window = 1;   ///< lead-profile moving-average width
  double epsilon = kDefaultEpsilon;

  FitOptions forecaster{.knn_neighbors = 10, .knn_max_rows = 4096};
  /// Caps historic-store rows; larger sets are thinned with a
  /// deterministic stride. 0 disables.
  int store_max_rows = 4096;

  /// Pinned exponents are fixed at the given value and excluded from
  /// optimization; this is how ablations and the static baselines disable
  /// aspects (a pinned 0 makes that aspect uniform).
  std::array<std::optional<double>, EtaVector::kSize> pinned{};

  /// Reserved: a joint polish over all free exponents after the greedy
  /// pass. Not implemented; fit_csge rejects true.
  bool joint_refine = false;

  void validate() const;
};

/// One optimization-set row with everything the objective needs: member
/// forecasts and local quality are precomputed once, so objective
/// evaluations never call the base forecasters.
struct ObjectiveRow {
  int lead = 0;
  double observation = 0.0;
  std::vector<std::optional<double>> values;  ///< per flat member index
  /// Per weather model: mean absolute neighborhood error per power model.
  /// An empty inner vector marks a model without locality data; all-empty
  /// is valid while both local exponents are zero.
  std::vector<std::vector<double>> local_q;
};

/// Frozen per-fold statistics plus the rows the objective averages over.
struct ObjectiveContext {
  LeadGrid grid;
  int weather_models = 0;
  int power_models = 0;
  double epsilon = kDefaultEpsilon;
  int smoothing_window = 1;
  std::vector<std::vector<double>> overall_rmse;  ///< [weather][power]
  LeadProfile profile;
  std::vector<ObjectiveRow> rows;
  double zeta = 0.0;

  /// Per-row local gating factors cached across objective evaluations,
  /// keyed by the local exponent pair: only two of the six greedy stages
  /// move those exponents, so most evaluations reuse the factors and skip
  /// the gating transcendentals. Because evaluations refresh this cache
  /// through a const reference, concurrent calls on one context require
  /// external synchronization.
  mutable std::vector<double> cached_local_weather;  ///< rows x weather
  mutable std::vector<double> cached_local_power;    ///< rows x members
  mutable double cached_eta_local_power = -1.0;
  mutable double cached_eta_local_weather = -1.0;
};

/// Mean squared ensemble error over the rows under the weights implied by
/// eta, plus zeta times the exponent sum. Exponents are taken as given
/// (bounds belong to the optimizer). Throws on empty rows.
double objective(const ObjectiveContext& context, const EtaVector& eta);

/// Minimizes fn over the exponents with a one-coordinate Nelder-Mead
/// search per greedy stage, in the order global weather, global power,
/// local weather, local power, lead weather, lead power. Candidates are
/// reflected at 0 and clamped at eta_max; a stage keeps the incumbent
/// coordinate unless it strictly improves, and snaps to 0 when 0 is within
/// fn_tol of the stage optimum. Throws when fn is not finite at the start.
EtaVector optimize_eta(const TrainConfig& config,
                       const std::function<double(const EtaVector&)>& fn);

/// One optimized exponent vector from a (fold, zeta) cell, scored by mean
/// validation RMSE over every fold.
struct FitCandidate {
  int fold = 0;
  double zeta = 0.0;
  EtaVector eta;
  double own_fold_rmse = 0.0;
  double mean_validation_rmse = 0.0;
  bool selected = false;
};

struct FitReport {
  int weather_models = 0;
  int power_models = 0;
  int train_origins = 0;
  int test_origins = 0;
  std::vector<FitCandidate> candidates;
  EtaVector chosen_eta;
  double chosen_zeta = 0.0;
  double chosen_mean_validation_rmse = 0.0;
  /// predict() calls consumed while precomputing member forecasts.
  std::uint64_t predict_calls_precompute = 0;
  /// predict() calls consumed by objective evaluations; stays 0 because
  /// member forecasts are precomputed once per fold.
  std::uint64_t predict_calls_optimize = 0;
  std::uint64_t objective_evaluations = 0;
  std::vector<std::string> notes;
};

struct FitResult {
  WeightState state;
  std::vector<ForecasterState> forecasters;  ///< by flat member index
  FitReport report;
};

/// Fits the full ensemble. Per fold: base forecasters are fitted on the
/// parameter origins; their out-of-sample predictions on the validation
/// origins build that fold's error statistics and historic stores; the
/// exponents are optimized on the optimization origins. Every candidate
/// exponent vector is then scored by mean validation RMSE across folds and
/// the best one kept. The returned state carries error statistics and
/// stores assembled from the out-of-fold validation predictions, and the
/// returned forecasters are refitted on the complete training window.
/// power_models lists the forecaster kind of each power model, shared by
/// every weather model.
FitResult fit_csge(const DataSet& data,
                   const std::vector<ForecasterKind>& power_models,
                   const TrainConfig& config, const SplitPlan& plan);

}  // namespace csge
