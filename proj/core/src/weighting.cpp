#include "csge/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "nearest.hpp"

namespace csge {

double EtaVector::sum() const {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

void EtaVector::validate() const {
  for (double x : v) {
    if (!(x >= 0.0)) {
      throw std::invalid_argument("gating exponents must be >= 0");
    }
  }
}

EtaVector EtaVector::zeros() {
  EtaVector eta;
  eta.v.fill(0.0);
  return eta;
}

EtaVector EtaVector::ones() {
  EtaVector eta;
  eta.v.fill(1.0);
  return eta;
}

ErrorLedger make_error_ledger(
    const LeadGrid& grid, int weather_models, int power_models,
    const std::vector<std::vector<LeadError>>& per_member) {
  grid.validate();
  if (weather_models < 1 || power_models < 1) {
    throw std::invalid_argument("ledger needs at least one member");
  }
  const int members = weather_models * power_models;
  if (static_cast<int>(per_member.size()) != members) {
    throw std::invalid_argument(
        "expected " + std::to_string(members) + " member error lists, got " +
        std::to_string(per_member.size()));
  }

  ErrorLedger ledger;
  ledger.grid = grid;
  ledger.weather_models = weather_models;
  ledger.power_models = power_models;
  const int leads = grid.lead_count();
  ledger.errors.assign(weather_models, {});
  ledger.overall.assign(weather_models, std::vector<double>(power_models, 0.0));
  ledger.per_lead.assign(
      weather_models,
      std::vector<std::vector<std::optional<double>>>(
          power_models, std::vector<std::optional<double>>(leads)));

  for (int psi = 1; psi <= weather_models; ++psi) {
    ledger.errors[psi - 1].assign(power_models, {});
    for (int phi = 1; phi <= power_models; ++phi) {
      const auto& list =
          per_member[flat_index(MemberId{psi, phi}, power_models) - 1];
      if (list.empty()) {
        throw std::invalid_argument(
            "member (weather " + std::to_string(psi) + ", power " +
            std::to_string(phi) + ") has no errors");
      }
      std::vector<double> lead_sq(leads, 0.0);
      std::vector<int> lead_n(leads, 0);
      double total_sq = 0.0;
      for (const LeadError& le : list) {
        const int idx = grid.index_of(le.lead);
        lead_sq[idx] += le.error * le.error;
        ++lead_n[idx];
        total_sq += le.error * le.error;
      }
      ledger.errors[psi - 1][phi - 1] = list;
      ledger.overall[psi - 1][phi - 1] =
          std::sqrt(total_sq / static_cast<double>(list.size()));
      for (int k = 0; k < leads; ++k) {
        if (lead_n[k] > 0) {
          ledger.per_lead[psi - 1][phi - 1][k] =
              std::sqrt(lead_sq[k] / static_cast<double>(lead_n[k]));
        }
      }
    }
  }
  return ledger;
}

std::vector<double> global_power_weights(const ErrorLedger& ledger,
                                         int weather_model, double eta,
                                         double epsilon) {
  if (weather_model < 1 || weather_model > ledger.weather_models) {
    throw std::invalid_argument("weather model index out of range");
  }
  ScoreTuple tuple;
  tuple.epsilon = epsilon;
  tuple.scores = ledger.overall[weather_model - 1];
  return soft_gate_all(tuple, eta);
}

std::vector<double> global_weather_weights(const ErrorLedger& ledger,
                                           double eta, double epsilon) {
  ScoreTuple tuple;
  tuple.epsilon = epsilon;
  tuple.scores.reserve(ledger.weather_models);
  for (int psi = 0; psi < ledger.weather_models; ++psi) {
    const std::vector<double>& row = ledger.overall[psi];
    tuple.scores.push_back(std::accumulate(row.begin(), row.end(), 0.0) /
                           static_cast<double>(row.size()));
  }
  return soft_gate_all(tuple, eta);
}

LeadProfile leadtime_profile(const ErrorLedger& ledger, int smoothing_window) {
  if (smoothing_window < 1 || smoothing_window % 2 == 0) {
    throw std::invalid_argument("smoothing window must be a positive odd integer");
  }
  const int leads = ledger.grid.lead_count();
  const int half = smoothing_window / 2;

  LeadProfile profile;
  profile.grid = ledger.grid;
  profile.r.assign(ledger.weather_models, {});

  for (int psi = 0; psi < ledger.weather_models; ++psi) {
    profile.r[psi].assign(ledger.power_models, std::vector<double>(leads, 0.0));
    for (int phi = 0; phi < ledger.power_models; ++phi) {
      const auto& raw = ledger.per_lead[psi][phi];
      std::vector<double> smoothed(leads, 0.0);
      for (int k = 0; k < leads; ++k) {
        if (smoothing_window == 1) {
          if (!raw[k]) {
            throw std::invalid_argument(
                "member (weather " + std::to_string(psi + 1) + ", power " +
                std::to_string(phi + 1) + ") has no forecasts at lead " +
                std::to_string(ledger.grid.k_min + k));
          }
          smoothed[k] = *raw[k];
          continue;
        }
        // Centered moving average: the window shrinks at the edges and
        // skips missing leads, which also fills gaps up to window/2 wide.
        double acc = 0.0;
        int count = 0;
        for (int j = std::max(0, k - half); j <= std::min(leads - 1, k + half);
             ++j) {
          if (raw[j]) {
            acc += *raw[j];
            ++count;
          }
        }
        if (count == 0) {
          throw std::invalid_argument(
              "member (weather " + std::to_string(psi + 1) + ", power " +
              std::to_string(phi + 1) + ") has no forecasts near lead " +
              std::to_string(ledger.grid.k_min + k));
        }
        smoothed[k] = acc / count;
      }
      const double mean =
          std::accumulate(smoothed.begin(), smoothed.end(), 0.0) /
          static_cast<double>(leads);
      if (!(mean > 0.0)) {
        // A member with zero error everywhere has a flat profile.
        std::fill(profile.r[psi][phi].begin(), profile.r[psi][phi].end(), 1.0);
        continue;
      }
      for (int k = 0; k < leads; ++k) profile.r[psi][phi][k] = smoothed[k] / mean;
    }
  }
  return profile;
}

LeadWeightTables leadtime_weights(const LeadProfile& profile, double eta_power,
                                  double eta_weather, double epsilon) {
  const int weather_models = static_cast<int>(profile.r.size());
  if (weather_models == 0) {
    throw std::invalid_argument("empty lead profile");
  }
  const int power_models = static_cast<int>(profile.r[0].size());
  const int leads = profile.grid.lead_count();

  LeadWeightTables tables;
  tables.power.assign(weather_models, {});
  tables.weather.assign(leads, {});

  ScoreTuple tuple;
  tuple.epsilon = epsilon;
  for (int psi = 0; psi < weather_models; ++psi) {
    tables.power[psi].assign(leads, {});
    for (int k = 0; k < leads; ++k) {
      tuple.scores.clear();
      for (int phi = 0; phi < power_models; ++phi) {
        tuple.scores.push_back(profile.r[psi][phi][k]);
      }
      tables.power[psi][k] = soft_gate_all(tuple, eta_power);
    }
  }
  for (int k = 0; k < leads; ++k) {
    tuple.scores.clear();
    for (int psi = 0; psi < weather_models; ++psi) {
      double mean = 0.0;
      for (int phi = 0; phi < power_models; ++phi) {
        mean += profile.r[psi][phi][k];
      }
      tuple.scores.push_back(mean / power_models);
    }
    tables.weather[k] = soft_gate_all(tuple, eta_weather);
  }
  return tables;
}

void standardization_stats(const std::vector<const std::vector<double>*>& rows,
                           std::vector<double>& mean,
                           std::vector<double>& scale) {
  if (rows.empty()) {
    throw std::invalid_argument("standardization needs at least one row");
  }
  const int dims = static_cast<int>(rows[0]->size());
  mean.assign(dims, 0.0);
  scale.assign(dims, 1.0);
  for (const std::vector<double>* row : rows) {
    if (static_cast<int>(row->size()) != dims) {
      throw std::invalid_argument("rows have inconsistent dimensions");
    }
    for (int d = 0; d < dims; ++d) mean[d] += (*row)[d];
  }
  for (int d = 0; d < dims; ++d) mean[d] /= static_cast<double>(rows.size());
  std::vector<double> var(dims, 0.0);
  for (const std::vector<double>* row : rows) {
    for (int d = 0; d < dims; ++d) {
      const double c = (*row)[d] - mean[d];
      var[d] += c * c;
    }
  }
  for (int d = 0; d < dims; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(rows.size()));
    scale[d] = sd > 0.0 ? sd : 1.0;
  }
}

HistoricStore make_historic_store(
    const std::vector<const std::vector<double>*>& rows,
    const std::vector<std::vector<double>>& member_abs_errors,
    std::vector<double> mean, std::vector<double> scale, int neighbor_count) {
  if (rows.empty()) {
    throw std::invalid_argument("historic store needs at least one row");
  }
  if (neighbor_count < 1) {
    throw std::invalid_argument("neighbor count must be >= 1");
  }
  if (member_abs_errors.empty()) {
    throw std::invalid_argument("historic store needs at least one power model");
  }
  const std::size_t n = rows.size();
  for (const auto& errors : member_abs_errors) {
    if (errors.size() != n) {
      throw std::invalid_argument(
          "error vector length does not match store row count");
    }
  }
  const int dims = static_cast<int>(rows[0]->size());
  if (static_cast<int>(mean.size()) != dims ||
      static_cast<int>(scale.size()) != dims) {
    throw std::invalid_argument("standardization statistics dimension mismatch");
  }

  HistoricStore store;
  store.dims = dims;
  store.neighbor_count = neighbor_count;
  store.feature_mean = std::move(mean);
  store.feature_scale = std::move(scale);
  store.member_abs_errors = member_abs_errors;
  store.features.resize(n * static_cast<std::size_t>(dims));
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i]->size()) != dims) {
      throw std::invalid_argument("rows have inconsistent dimensions");
    }
    for (int d = 0; d < dims; ++d) {
      store.features[i * dims + d] =
          ((*rows[i])[d] - store.feature_mean[d]) / store.feature_scale[d];
    }
  }
  return store;
}

LocalQuality HistoricStore::local_quality(std::span<const double> query) const {
  const std::size_t n = rows();
  if (n == 0) {
    throw std::invalid_argument("historic store is empty");
  }
  if (static_cast<int>(query.size()) != dims) {
    throw std::invalid_argument("query dimension does not match store");
  }

  thread_local std::vector<double> standardized;
  standardized.resize(dims);
  for (int d = 0; d < dims; ++d) {
    standardized[d] = (query[d] - feature_mean[d]) / feature_scale[d];
  }

  LocalQuality result;
  const std::size_t c =
      std::min(static_cast<std::size_t>(neighbor_count), n);
  result.degraded = c < static_cast<std::size_t>(neighbor_count);

  thread_local std::vector<std::pair<double, std::uint32_t>> heap;
  detail::select_nearest(features.data(), n, dims, standardized.data(), c,
                         heap, result.neighbors);

  result.q.reserve(member_abs_errors.size());
  for (const std::vector<double>& errors : member_abs_errors) {
    double acc = 0.0;
    for (std::uint32_t row : result.neighbors) acc += errors[row];
    result.q.push_back(acc / static_cast<double>(c));
  }
  return result;
}

LocalWeights local_weights(const std::vector<std::vector<double>>& q,
                           double eta_power, double eta_weather,
                           double epsilon) {
  if (q.empty()) {
    throw std::invalid_argument("local weights need at least one weather model");
  }
  LocalWeights weights;
  weights.power.reserve(q.size());
  ScoreTuple weather_tuple;
  weather_tuple.epsilon = epsilon;
  for (const std::vector<double>& row : q) {
    if (row.empty()) {
      throw std::invalid_argument("local quality row is empty");
    }
    ScoreTuple tuple{row, epsilon};
    weights.power.push_back(soft_gate_all(tuple, eta_power));
    weather_tuple.scores.push_back(
        std::accumulate(row.begin(), row.end(), 0.0) /
        static_cast<double>(row.size()));
  }
  weights.weather = soft_gate_all(weather_tuple, eta_weather);
  return weights;
}

WeightState make_weight_tables(const LeadGrid& grid,
                               const std::vector<std::vector<double>>& overall,
                               const LeadProfile& profile, const EtaVector& eta,
                               int smoothing_window, double epsilon) {
  eta.validate();
  const int weather_models = static_cast<int>(overall.size());
  if (weather_models == 0 || overall[0].empty()) {
    throw std::invalid_argument("overall error matrix is empty");
  }
  const int power_models = static_cast<int>(overall[0].size());

  WeightState state;
  state.grid = grid;
  state.weather_models = weather_models;
  state.power_models = power_models;
  state.eta = eta;
  state.epsilon = epsilon;
  state.smoothing_window = smoothing_window;

  ScoreTuple weather_tuple;
  weather_tuple.epsilon = epsilon;
  state.global_power.reserve(weather_models);
  for (const std::vector<double>& row : overall) {
    if (static_cast<int>(row.size()) != power_models) {
      throw std::invalid_argument("overall error matrix is ragged");
    }
    state.global_power.push_back(
        soft_gate_all(ScoreTuple{row, epsilon}, eta.global_power()));
    weather_tuple.scores.push_back(
        std::accumulate(row.begin(), row.end(), 0.0) /
        static_cast<double>(row.size()));
  }
  state.global_weather = soft_gate_all(weather_tuple, eta.global_weather());

  LeadWeightTables tables =
      leadtime_weights(profile, eta.lead_power(), eta.lead_weather(), epsilon);
  state.lead_weather = std::move(tables.weather);
  state.lead_power = std::move(tables.power);
  return state;
}

WeightState make_weight_state(const ErrorLedger& ledger,
                              std::vector<HistoricStore> stores,
                              const EtaVector& eta, int smoothing_window,
                              double epsilon) {
  if (static_cast<int>(stores.size()) != ledger.weather_models) {
    throw std::invalid_argument("need one historic store per weather model");
  }
  const LeadProfile profile = leadtime_profile(ledger, smoothing_window);
  WeightState state = make_weight_tables(ledger.grid, ledger.overall, profile,
                                         eta, smoothing_window, epsilon);
  state.historic = std::move(stores);
  return state;
}

}  // namespace csge
