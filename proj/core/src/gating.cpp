#include "csge/gating.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csge {

namespace {

void check_inputs(const ScoreTuple& tuple, double eta) {
  if (tuple.scores.empty()) {
    throw std::invalid_argument("score tuple must not be empty");
  }
  if (!(tuple.epsilon >= 0.0)) {
    throw std::invalid_argument("epsilon must be >= 0");
  }
  if (!(eta >= 0.0)) {
    throw std::invalid_argument("gating exponent must be >= 0");
  }
  for (double s : tuple.scores) {
    if (!(s >= 0.0)) {
      throw std::invalid_argument("scores must be >= 0");
    }
  }
}

// omega^eta + epsilon, with 0^0 defined as 1 so eta = 0 stays uniform.
double powered(double omega, double eta, double epsilon) {
  if (eta == 0.0) return 1.0 + epsilon;
  return std::pow(omega, eta) + epsilon;
}

}  // namespace

double soft_gate(double omega, const ScoreTuple& tuple, double eta) {
  check_inputs(tuple, eta);
  if (!(omega >= 0.0)) {
    throw std::invalid_argument("omega must be >= 0");
  }

  const double eps = tuple.epsilon;
  const double own = powered(omega, eta, eps);

  double min_term = powered(tuple.scores[0], eta, eps);
  for (double s : tuple.scores) {
    min_term = std::min(min_term, powered(s, eta, eps));
  }

  // A powered score of exactly zero (epsilon = 0 with a zero or underflowed
  // score) dominates the competition; the gating limit splits all weight
  // evenly among the zero entries.
  if (min_term == 0.0) {
    if (own != 0.0) return 0.0;
    int zero_terms = 0;
    for (double s : tuple.scores) {
      if (powered(s, eta, eps) == 0.0) ++zero_terms;
    }
    return 1.0 / zero_terms;
  }

  // Rescale by the smallest term so the inverse sum stays in range even
  // when eta is large enough to denormalize the powered scores.
  double inverse_sum = 0.0;
  for (double s : tuple.scores) {
    inverse_sum += min_term / powered(s, eta, eps);
  }
  return (min_term / own) / inverse_sum;
}

std::vector<double> soft_gate_all(const ScoreTuple& tuple, double eta) {
  std::vector<double> weights(tuple.scores.size());
  soft_gate_into(tuple.scores, eta, tuple.epsilon, weights);
  return weights;
}

void soft_gate_into(std::span<const double> scores, double eta,
                    double epsilon, std::span<double> out) {
  if (scores.empty()) {
    throw std::invalid_argument("score tuple must not be empty");
  }
  if (out.size() != scores.size()) {
    throw std::invalid_argument("output span must match the score tuple");
  }
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("epsilon must be >= 0");
  }
  if (!(eta >= 0.0)) {
    throw std::invalid_argument("gating exponent must be >= 0");
  }

  const std::size_t n = scores.size();
  double min_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(scores[i] >= 0.0)) {
      throw std::invalid_argument("scores must be >= 0");
    }
    out[i] = powered(scores[i], eta, epsilon);
    min_term = i == 0 ? out[i] : std::min(min_term, out[i]);
  }

  if (min_term == 0.0) {
    int zero_terms = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] == 0.0) ++zero_terms;
    }
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = out[i] == 0.0 ? 1.0 / zero_terms : 0.0;
    }
    return;
  }

  double inverse_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) inverse_sum += min_term / out[i];
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (min_term / out[i]) / inverse_sum;
  }
}

}  // namespace csge
