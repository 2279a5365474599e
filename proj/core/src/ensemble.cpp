#include "csge/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "csge/gating.hpp"

namespace csge {

namespace {

void require_fitted(const WeightState& state) {
  if (!state.fitted()) {
    throw std::invalid_argument("weight state is not fitted");
  }
}

}  // namespace

std::pair<double, double> member_weight_raw(
    const WeightState& state, MemberId member, int lead,
    const std::vector<std::vector<double>>& local_q) {
  require_fitted(state);
  const int psi = member.weather_model - 1;
  const int phi = member.power_model - 1;
  if (psi < 0 || psi >= state.weather_models || phi < 0 ||
      phi >= state.power_models) {
    throw std::invalid_argument("member index out of range");
  }
  const int kidx = state.grid.index_of(lead);

  const LocalWeights lw = local_weights(local_q, state.eta.local_power(),
                                        state.eta.local_weather(),
                                        state.epsilon);
  const double weather = state.global_weather[psi] * lw.weather[psi] *
                         state.lead_weather[kidx][psi];
  const double power = state.global_power[psi][phi] * lw.power[psi][phi] *
                       state.lead_power[psi][kidx][phi];
  return {weather, power};
}

std::vector<double> normalize_weights(std::span<const double> raw_products,
                                      const std::vector<bool>& available,
                                      bool* uniform_fallback) {
  if (raw_products.empty() || raw_products.size() != available.size()) {
    throw std::invalid_argument(
        "raw products and availability flags must match and be non-empty");
  }
  if (uniform_fallback != nullptr) *uniform_fallback = false;

  int avail = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < raw_products.size(); ++i) {
    if (!available[i]) continue;
    if (!std::isfinite(raw_products[i]) || raw_products[i] < 0.0) {
      throw std::invalid_argument(
          "member weight products must be finite and >= 0");
    }
    ++avail;
    sum += raw_products[i];
  }
  if (avail == 0) {
    throw std::invalid_argument("no ensemble members available");
  }

  std::vector<double> weights(raw_products.size(), 0.0);
  if (sum == 0.0) {
    if (uniform_fallback != nullptr) *uniform_fallback = true;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (available[i]) weights[i] = 1.0 / avail;
    }
    return weights;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (available[i]) weights[i] = raw_products[i] / sum;
  }
  return weights;
}

double combine(const std::vector<MemberForecast>& forecasts,
               std::span<const double> weights) {
  if (forecasts.empty() || forecasts.size() != weights.size()) {
    throw std::invalid_argument(
        "forecasts and weights must match and be non-empty");
  }
  double value = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    if (!forecasts[i].value.has_value()) {
      if (weights[i] != 0.0) {
        throw std::invalid_argument(
            "unavailable member carries a nonzero weight");
      }
      continue;
    }
    value += weights[i] * *forecasts[i].value;
  }
  return value;
}

std::vector<std::optional<double>> member_values(
    const std::vector<ForecasterState>& forecasters, int weather_models,
    int power_models, const AlignedRow& row,
    const std::vector<bool>& dropped) {
  const std::size_t count =
      static_cast<std::size_t>(weather_models) * power_models;
  if (forecasters.size() != count) {
    throw std::invalid_argument(
        "forecaster count must equal weather models times power models");
  }
  if (row.features.size() != static_cast<std::size_t>(weather_models)) {
    throw std::invalid_argument(
        "aligned row does not match the weather model count");
  }
  if (!dropped.empty() && dropped.size() != count) {
    throw std::invalid_argument("drop mask must cover every member");
  }

  std::vector<std::optional<double>> values(count);
  ForecastRecord record;
  record.origin = row.origin;
  record.lead = row.lead;
  record.recent_power_at_origin = row.recent_power;
  for (int psi = 0; psi < weather_models; ++psi) {
    if (row.features[psi] == nullptr) continue;  // weather model missing
    record.weather_model = psi + 1;
    record.features = *row.features[psi];
    for (int phi = 0; phi < power_models; ++phi) {
      const int j = flat_index(MemberId{psi + 1, phi + 1}, power_models) - 1;
      if (!dropped.empty() && dropped[j]) continue;
      values[j] = predict(forecasters[j], record);
    }
  }
  return values;
}

void local_gate_factors(const WeightState& state,
                        const std::vector<const std::vector<double>*>& local_q,
                        const std::vector<std::optional<double>>& values,
                        EnsembleScratch& scratch) {
  require_fitted(state);
  const int psi_n = state.weather_models;
  const int phi_n = state.power_models;
  const int count = psi_n * phi_n;
  if (values.size() != static_cast<std::size_t>(count)) {
    throw std::invalid_argument("member values must cover every member");
  }
  if (local_q.size() != static_cast<std::size_t>(psi_n)) {
    throw std::invalid_argument(
        "local quality list must cover every weather model");
  }

  const double eta_lp = state.eta.local_power();
  const double eta_lw = state.eta.local_weather();
  const bool local_active = eta_lp != 0.0 || eta_lw != 0.0;

  scratch.local_power.assign(count, 0.0);
  scratch.local_weather.assign(psi_n, 0.0);
  scratch.tuple.resize(std::max(psi_n, phi_n));
  scratch.gate.resize(std::max(psi_n, phi_n));
  scratch.tuple_members.resize(std::max(psi_n, phi_n));

  // Local power-model factors, gated per weather model over the available
  // power models; with both local exponents zero the factors are uniform
  // and no quality values are consulted.
  for (int psi = 0; psi < psi_n; ++psi) {
    int n = 0;
    for (int phi = 0; phi < phi_n; ++phi) {
      if (values[psi * phi_n + phi].has_value()) scratch.tuple_members[n++] = phi;
    }
    if (n == 0) continue;
    if (!local_active) {
      for (int i = 0; i < n; ++i) {
        scratch.local_power[psi * phi_n + scratch.tuple_members[i]] = 1.0 / n;
      }
      continue;
    }
    if (local_q[psi] == nullptr ||
        local_q[psi]->size() != static_cast<std::size_t>(phi_n)) {
      throw std::logic_error(
          "local quality missing for an available weather model");
    }
    for (int i = 0; i < n; ++i) {
      scratch.tuple[i] = (*local_q[psi])[scratch.tuple_members[i]];
    }
    soft_gate_into(std::span<const double>(scratch.tuple.data(), n), eta_lp,
                   state.epsilon, std::span<double>(scratch.gate.data(), n));
    for (int i = 0; i < n; ++i) {
      scratch.local_power[psi * phi_n + scratch.tuple_members[i]] =
          scratch.gate[i];
    }
  }

  // Local weather-model factors over the mean quality of each available
  // weather model's available power models.
  {
    int n = 0;
    for (int psi = 0; psi < psi_n; ++psi) {
      double sum = 0.0;
      int members = 0;
      for (int phi = 0; phi < phi_n; ++phi) {
        if (!values[psi * phi_n + phi].has_value()) continue;
        if (local_active) sum += (*local_q[psi])[phi];
        ++members;
      }
      if (members == 0) continue;
      scratch.tuple_members[n] = psi;
      scratch.tuple[n] = local_active ? sum / members : 0.0;
      ++n;
    }
    // No available member at all: leave every factor at zero and let the
    // assembly step report the empty ensemble.
    if (n == 0) return;
    if (!local_active) {
      for (int i = 0; i < n; ++i) {
        scratch.local_weather[scratch.tuple_members[i]] = 1.0 / n;
      }
    } else {
      soft_gate_into(std::span<const double>(scratch.tuple.data(), n), eta_lw,
                     state.epsilon, std::span<double>(scratch.gate.data(), n));
      for (int i = 0; i < n; ++i) {
        scratch.local_weather[scratch.tuple_members[i]] = scratch.gate[i];
      }
    }
  }
}

double assemble_from_factors(const WeightState& state, int lead,
                             const std::vector<std::optional<double>>& values,
                             std::span<const double> local_weather,
                             std::span<const double> local_power,
                             EnsembleScratch& scratch,
                             std::vector<double>* weights_out,
                             std::vector<MemberDiagnostics>* diagnostics,
                             bool* uniform_fallback) {
  require_fitted(state);
  const int psi_n = state.weather_models;
  const int phi_n = state.power_models;
  const int count = psi_n * phi_n;
  if (values.size() != static_cast<std::size_t>(count) ||
      local_weather.size() != static_cast<std::size_t>(psi_n) ||
      local_power.size() != static_cast<std::size_t>(count)) {
    throw std::invalid_argument(
        "member values and local factors must cover every member");
  }
  const int kidx = state.grid.index_of(lead);
  if (uniform_fallback != nullptr) *uniform_fallback = false;

  int avail_total = 0;
  for (int j = 0; j < count; ++j) {
    if (values[j].has_value()) ++avail_total;
  }
  if (avail_total == 0) {
    throw std::runtime_error("no ensemble members available");
  }

  // Three-factor products at both levels, then normalization over the
  // available members.
  scratch.raw.assign(count, 0.0);
  double sum = 0.0;
  for (int psi = 0; psi < psi_n; ++psi) {
    const double weather = state.global_weather[psi] * local_weather[psi] *
                           state.lead_weather[kidx][psi];
    for (int phi = 0; phi < phi_n; ++phi) {
      const int j = psi * phi_n + phi;
      if (!values[j].has_value()) continue;
      const double power = state.global_power[psi][phi] * local_power[j] *
                           state.lead_power[psi][kidx][phi];
      scratch.raw[j] = weather * power;
      sum += scratch.raw[j];
    }
  }

  double value = 0.0;
  const double uniform = 1.0 / avail_total;
  const bool fallback = sum == 0.0;
  if (fallback && uniform_fallback != nullptr) *uniform_fallback = true;
  for (int j = 0; j < count; ++j) {
    if (!values[j].has_value()) continue;
    const double w = fallback ? uniform : scratch.raw[j] / sum;
    scratch.raw[j] = w;  // reuse as the normalized weight
    value += w * *values[j];
  }

  if (weights_out != nullptr) {
    weights_out->assign(count, 0.0);
    for (int j = 0; j < count; ++j) {
      if (values[j].has_value()) (*weights_out)[j] = scratch.raw[j];
    }
  }
  if (diagnostics != nullptr) {
    diagnostics->assign(count, MemberDiagnostics{});
    for (int psi = 0; psi < psi_n; ++psi) {
      for (int phi = 0; phi < phi_n; ++phi) {
        const int j = psi * phi_n + phi;
        MemberDiagnostics& d = (*diagnostics)[j];
        d.member = MemberId{psi + 1, phi + 1};
        d.available = values[j].has_value();
        d.value = values[j];
        if (!d.available) continue;
        d.global_weather = state.global_weather[psi];
        d.local_weather = local_weather[psi];
        d.lead_weather = state.lead_weather[kidx][psi];
        d.global_power = state.global_power[psi][phi];
        d.local_power = local_power[j];
        d.lead_power = state.lead_power[psi][kidx][phi];
        d.raw_product = d.global_weather * d.local_weather * d.lead_weather *
                        d.global_power * d.local_power * d.lead_power;
        d.weight = scratch.raw[j];
      }
    }
  }
  return value;
}

double assemble_prediction(const WeightState& state, int lead,
                           const std::vector<const std::vector<double>*>& local_q,
                           const std::vector<std::optional<double>>& values,
                           EnsembleScratch& scratch,
                           std::vector<double>* weights_out,
                           std::vector<MemberDiagnostics>* diagnostics,
                           bool* uniform_fallback) {
  local_gate_factors(state, local_q, values, scratch);
  return assemble_from_factors(state, lead, values, scratch.local_weather,
                               scratch.local_power, scratch, weights_out,
                               diagnostics, uniform_fallback);
}

Prediction predict_csge(const WeightState& state,
                        const std::vector<ForecasterState>& forecasters,
                        const AlignedRow& row,
                        const std::vector<bool>& dropped) {
  require_fitted(state);
  const int psi_n = state.weather_models;
  const int phi_n = state.power_models;
  const std::vector<std::optional<double>> values =
      member_values(forecasters, psi_n, phi_n, row, dropped);

  const bool local_active =
      state.eta.local_power() != 0.0 || state.eta.local_weather() != 0.0;
  std::vector<LocalQuality> quality(psi_n);
  std::vector<const std::vector<double>*> local_q(psi_n, nullptr);
  if (local_active) {
    for (int psi = 0; psi < psi_n; ++psi) {
      bool any = false;
      for (int phi = 0; phi < phi_n; ++phi) {
        if (values[psi * phi_n + phi].has_value()) any = true;
      }
      if (!any) continue;
      quality[psi] = state.historic[psi].local_quality(*row.features[psi]);
      local_q[psi] = &quality[psi].q;
    }
  }

  Prediction prediction;
  EnsembleScratch scratch;
  prediction.value = assemble_prediction(
      state, row.lead, local_q, values, scratch, &prediction.weights,
      &prediction.members, &prediction.uniform_fallback);
  return prediction;
}

}  // namespace csge
