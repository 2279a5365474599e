#include "csge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csge {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) {
    throw std::invalid_argument("score inputs must not be empty");
  }
  if (a.size() != b.size()) {
    throw std::invalid_argument("forecast and observation lengths differ");
  }
}

long long checked_lcm(long long a, long long b) {
  const long long g = std::gcd(a, b);
  const long long q = a / g;
  if (q > (1LL << 60) / b) {
    throw std::overflow_error("win-count denominator overflow");
  }
  return q * b;
}

}  // namespace

double rmse(std::span<const double> forecasts,
            std::span<const double> observations) {
  check_pair(forecasts, observations);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const double e = forecasts[i] - observations[i];
    sum_sq += e * e;
  }
  return std::sqrt(sum_sq / static_cast<double>(forecasts.size()));
}

std::optional<double> r_squared(std::span<const double> forecasts,
                                std::span<const double> observations) {
  check_pair(forecasts, observations);
  const std::size_t n = forecasts.size();
  double mean_f = 0.0, mean_o = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_f += forecasts[i];
    mean_o += observations[i];
  }
  mean_f /= static_cast<double>(n);
  mean_o /= static_cast<double>(n);

  double cov = 0.0, var_f = 0.0, var_o = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double df = forecasts[i] - mean_f;
    const double dobs = observations[i] - mean_o;
    cov += df * dobs;
    var_f += df * df;
    var_o += dobs * dobs;
  }
  if (var_f == 0.0 || var_o == 0.0) return std::nullopt;
  return (cov * cov) / (var_f * var_o);
}

double skill(double e_base, double e_eval) {
  if (!(e_base > 0.0)) {
    throw std::invalid_argument("baseline error must be > 0");
  }
  return (e_base - e_eval) / e_base;
}

WinTally wins(const std::vector<std::vector<double>>& scores,
              Direction direction, double tolerance) {
  if (scores.empty()) {
    throw std::invalid_argument("wins requires at least one method");
  }
  const std::size_t methods = scores.size();
  const std::size_t datasets = scores[0].size();
  for (const auto& row : scores) {
    if (row.size() != datasets) {
      throw std::invalid_argument("score matrix rows have unequal lengths");
    }
  }
  if (datasets == 0) {
    throw std::invalid_argument("wins requires at least one dataset");
  }
  if (!(tolerance >= 0.0)) {
    throw std::invalid_argument("tolerance must be >= 0");
  }

  // Per dataset, the tie group splits one point into 1/k shares. Shares are
  // accumulated as integers over the least common multiple of all observed
  // group sizes, so the totals stay exact.
  std::vector<int> tie_size(datasets);
  std::vector<std::vector<bool>> in_tie(methods, std::vector<bool>(datasets));
  long long denominator = 1;
  for (std::size_t d = 0; d < datasets; ++d) {
    double best = scores[0][d];
    for (std::size_t m = 1; m < methods; ++m) {
      best = direction == Direction::lower_better
                 ? std::min(best, scores[m][d])
                 : std::max(best, scores[m][d]);
    }
    int k = 0;
    for (std::size_t m = 0; m < methods; ++m) {
      if (std::abs(scores[m][d] - best) <= tolerance) {
        in_tie[m][d] = true;
        ++k;
      }
    }
    tie_size[d] = k;
    denominator = checked_lcm(denominator, k);
  }

  WinTally tally;
  tally.denominator = denominator;
  tally.numerators.assign(methods, 0);
  tally.wins.assign(methods, 0.0);
  for (std::size_t m = 0; m < methods; ++m) {
    for (std::size_t d = 0; d < datasets; ++d) {
      if (in_tie[m][d]) tally.numerators[m] += denominator / tie_size[d];
    }
    tally.wins[m] = static_cast<double>(tally.numerators[m]) /
                    static_cast<double>(denominator);
  }
  return tally;
}

std::vector<double> ScoreTable::mean_rmse() const {
  std::vector<double> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out[m] = std::accumulate(rmse[m].begin(), rmse[m].end(), 0.0) /
             static_cast<double>(rmse[m].size());
  }
  return out;
}

std::vector<double> ScoreTable::std_rmse() const {
  const std::vector<double> means = mean_rmse();
  std::vector<double> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    double acc = 0.0;
    for (double v : rmse[m]) acc += (v - means[m]) * (v - means[m]);
    out[m] = std::sqrt(acc / static_cast<double>(rmse[m].size()));
  }
  return out;
}

std::vector<double> ScoreTable::skill_of_means(
    const std::string& baseline) const {
  const std::vector<double> means = mean_rmse();
  const double base = means[static_cast<std::size_t>(method_index(baseline))];
  std::vector<double> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out[m] = skill(base, means[m]);
  }
  return out;
}

std::vector<double> ScoreTable::mean_of_skills(
    const std::string& baseline) const {
  const std::size_t b = static_cast<std::size_t>(method_index(baseline));
  std::vector<double> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    double acc = 0.0;
    for (std::size_t d = 0; d < rmse[m].size(); ++d) {
      acc += skill(rmse[b][d], rmse[m][d]);
    }
    out[m] = acc / static_cast<double>(rmse[m].size());
  }
  return out;
}

WinTally ScoreTable::rmse_wins(double tolerance) const {
  return wins(rmse, Direction::lower_better, tolerance);
}

int ScoreTable::method_index(const std::string& name) const {
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (methods[m] == name) return static_cast<int>(m);
  }
  throw std::invalid_argument("unknown method: " + name);
}

}  // namespace csge
