#include "csge/core.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

namespace csge {

int LeadGrid::index_of(int k) const {
  if (!contains(k)) {
    throw std::invalid_argument("lead " + std::to_string(k) +
                                " outside grid [" + std::to_string(k_min) +
                                ", " + std::to_string(k_max) + "]");
  }
  return k - k_min;
}

void LeadGrid::validate() const {
  if (k_min < 0 || k_max < k_min) {
    throw std::invalid_argument("invalid lead grid bounds [" +
                                std::to_string(k_min) + ", " +
                                std::to_string(k_max) + "]");
  }
  if (delta_seconds <= 0) {
    throw std::invalid_argument("lead step duration must be positive");
  }
}

int flat_index(MemberId id, int power_model_count) {
  if (power_model_count < 1) {
    throw std::invalid_argument("power model count must be >= 1");
  }
  if (id.weather_model < 1 || id.power_model < 1 ||
      id.power_model > power_model_count) {
    throw std::invalid_argument(
        "member index out of range: weather " +
        std::to_string(id.weather_model) + ", power " +
        std::to_string(id.power_model) + " with " +
        std::to_string(power_model_count) + " power models");
  }
  return (id.weather_model - 1) * power_model_count + id.power_model;
}

MemberId member_from_flat(int j, int power_model_count) {
  if (power_model_count < 1) {
    throw std::invalid_argument("power model count must be >= 1");
  }
  if (j < 1) {
    throw std::invalid_argument("flat member index must be >= 1");
  }
  return MemberId{(j - 1) / power_model_count + 1,
                  (j - 1) % power_model_count + 1};
}

std::vector<std::int64_t> DataSet::origins() const {
  std::vector<std::int64_t> out;
  out.reserve(records.size() / std::max(1, grid.lead_count()));
  for (const ForecastRecord& r : records) {
    if (out.empty() || out.back() != r.origin) out.push_back(r.origin);
  }
  // records are sorted by (origin, lead), so origins arrive grouped
  return out;
}

DataSet make_dataset(std::vector<ForecastRecord> records, LeadGrid grid,
                     int weather_models, std::vector<int> feature_dims,
                     FeatureRangeCheck range_check) {
  grid.validate();
  if (weather_models < 1) {
    throw std::invalid_argument("weather model count must be >= 1");
  }
  if (static_cast<int>(feature_dims.size()) != weather_models) {
    throw std::invalid_argument("feature_dims must have one entry per weather model");
  }

  for (const ForecastRecord& r : records) {
    if (!grid.contains(r.lead)) {
      throw std::invalid_argument("record lead " + std::to_string(r.lead) +
                                  " outside grid");
    }
    if (r.weather_model < 1 || r.weather_model > weather_models) {
      throw std::invalid_argument("record weather model " +
                                  std::to_string(r.weather_model) +
                                  " out of range");
    }
    if (r.origin_lag < 0) {
      throw std::invalid_argument("origin_lag must be >= 0");
    }
    const int want = feature_dims[r.weather_model - 1];
    if (static_cast<int>(r.features.size()) != want) {
      throw std::invalid_argument(
          "record feature length " + std::to_string(r.features.size()) +
          " does not match declared dimensionality " + std::to_string(want) +
          " for weather model " + std::to_string(r.weather_model));
    }
    if (range_check == FeatureRangeCheck::enforce) {
      for (double x : r.features) {
        if (!(x >= 0.0 && x <= 1.0)) {
          throw std::invalid_argument("feature value outside [0,1]");
        }
      }
    }
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const ForecastRecord& a, const ForecastRecord& b) {
                     return std::tie(a.origin, a.lead, a.weather_model,
                                     a.origin_lag) <
                            std::tie(b.origin, b.lead, b.weather_model,
                                     b.origin_lag);
                   });
  for (std::size_t i = 1; i < records.size(); ++i) {
    const ForecastRecord& a = records[i - 1];
    const ForecastRecord& b = records[i];
    if (a.origin == b.origin && a.lead == b.lead &&
        a.weather_model == b.weather_model && a.origin_lag == b.origin_lag) {
      throw std::invalid_argument(
          "duplicate record key at origin " + std::to_string(b.origin) +
          ", lead " + std::to_string(b.lead) + ", weather model " +
          std::to_string(b.weather_model));
    }
  }

  DataSet out;
  out.records = std::move(records);
  out.grid = grid;
  out.weather_models = weather_models;
  out.feature_dims = std::move(feature_dims);
  return out;
}

std::vector<AlignedRow> align(const DataSet& data, int lead) {
  data.grid.index_of(lead);  // bounds check

  std::vector<AlignedRow> out;
  AlignedRow current;
  bool open = false;
  bool has_observation = false;

  auto flush = [&]() {
    if (open && has_observation) out.push_back(std::move(current));
    open = false;
    has_observation = false;
  };

  for (const ForecastRecord& r : data.records) {
    if (r.lead != lead || r.origin_lag != 0) continue;
    if (!open || current.origin != r.origin) {
      flush();
      current = AlignedRow{};
      current.origin = r.origin;
      current.lead = lead;
      current.features.assign(data.weather_models, nullptr);
      open = true;
    }
    current.features[r.weather_model - 1] = &r.features;
    if (r.observation) {
      current.observation = *r.observation;
      has_observation = true;
    }
    if (r.recent_power_at_origin && !current.recent_power) {
      current.recent_power = r.recent_power_at_origin;
    }
  }
  flush();
  return out;
}

std::vector<AlignedRow> align_all(const DataSet& data) {
  std::vector<AlignedRow> out;
  for (int k = data.grid.k_min; k <= data.grid.k_max; ++k) {
    std::vector<AlignedRow> rows = align(data, k);
    out.insert(out.end(), std::make_move_iterator(rows.begin()),
               std::make_move_iterator(rows.end()));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AlignedRow& a, const AlignedRow& b) {
                     return std::tie(a.origin, a.lead) <
                            std::tie(b.origin, b.lead);
                   });
  return out;
}

}  // namespace csge
