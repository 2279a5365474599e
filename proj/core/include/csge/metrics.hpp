#pragma once

// Forecast scoring: RMSE, squared correlation, skill relative to a
// baseline, and per-dataset win counts with fractional tie splitting.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csge {

/// Root mean squared error of paired forecasts and observations. Pairs with
/// missing observations must be dropped before the call. Throws
/// std::invalid_argument on empty or mismatched inputs.
double rmse(std::span<const double> forecasts,
            std::span<const double> observations);

/// Squared Pearson correlation between forecasts and observations, in
/// [0,1]. Returns nullopt when either side has zero variance (the score is
/// undefined, never 0). Throws std::invalid_argument on empty or mismatched
/// inputs.
std::optional<double> r_squared(std::span<const double> forecasts,
                                std::span<const double> observations);

/// Fractional improvement of an evaluated error over a baseline error:
/// (e_base - e_eval) / e_base. Positive means the evaluated method is
/// better. Throws std::invalid_argument unless e_base > 0.
double skill(double e_base, double e_eval);

enum class Direction { lower_better, higher_better };

/// Win counts with exact tie accounting. Each dataset awards one point,
/// split evenly among the methods tying for the best score within the
/// comparison tolerance. wins[m] = numerators[m] / denominator; the
/// numerators carry the split exactly, so the totals always sum to the
/// dataset count.
struct WinTally {
  std::vector<double> wins;
  std::vector<long long> numerators;
  long long denominator = 1;
};

/// scores[m][d] is method m's score on dataset d; all rows must have equal
/// length. Tolerance defaults to 1e-3, matching three-decimal score
/// reporting.
WinTally wins(const std::vector<std::vector<double>>& scores,
              Direction direction, double tolerance = 1e-3);

/// Scores of several methods across datasets, with the aggregate rows
/// reported below forecast comparison tables: mean, standard deviation,
/// skill against a baseline method, and win counts.
struct ScoreTable {
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::vector<std::vector<double>> rmse;  ///< [method][dataset]
  std::vector<std::vector<std::optional<double>>> r2;  ///< [method][dataset]

  std::vector<double> mean_rmse() const;
  /// Population standard deviation of per-dataset RMSE values.
  std::vector<double> std_rmse() const;
  /// Skill of each method's mean RMSE against the named baseline method.
  std::vector<double> skill_of_means(const std::string& baseline) const;
  /// Mean of per-dataset skills against the named baseline method.
  std::vector<double> mean_of_skills(const std::string& baseline) const;
  WinTally rmse_wins(double tolerance = 1e-3) const;

  int method_index(const std::string& name) const;  // throws when unknown
};

}  // namespace csge
