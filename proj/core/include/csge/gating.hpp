#pragma once

// Coopetitive soft gating: maps a tuple of nonnegative error scores to
// normalized weights. The exponent eta interpolates between cooperation
// (eta = 0, uniform averaging) and competition (eta -> infinity, the best
// score takes all weight).

#include <span>
#include <vector>

namespace csge {

/// Stabilizer added to each powered score before inversion.
inline constexpr double kDefaultEpsilon = 1e-10;

/// A tuple of reference quality scores (typically error statistics such as
/// RMSE values) competing for weight. epsilon guards the inversion against
/// zero scores; epsilon == 0 is permitted when all scores are positive, in
/// which case gating is exactly scale invariant.
struct ScoreTuple {
  std::vector<double> scores;
  double epsilon = kDefaultEpsilon;
};

/// Weight assigned to a score omega competing against the tuple:
///
///   w = [(omega^eta + epsilon) * sum_n (scores[n]^eta + epsilon)^-1]^-1
///
/// Lower scores receive higher weight for eta > 0; eta == 0 weights all
/// entries uniformly (0^0 is taken as 1). Called with each omega = scores[n]
/// in turn, the results sum to 1. Throws std::invalid_argument for negative
/// eta, negative omega, a negative score, a negative epsilon, or an empty
/// tuple.
double soft_gate(double omega, const ScoreTuple& scores, double eta);

/// soft_gate for every entry of the tuple; the components sum to 1.
std::vector<double> soft_gate_all(const ScoreTuple& scores, double eta);

/// Allocation-free soft_gate_all over raw spans: writes the weight of
/// scores[i] to out[i]. out must match scores in length and may not alias
/// it. Validation matches soft_gate_all.
void soft_gate_into(std::span<const double> scores, double eta,
                    double epsilon, std::span<double> out);

}  // namespace csge
