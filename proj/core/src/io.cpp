#include "csge/io.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "json.hpp"

namespace csge {

namespace {

// ---- Calendar arithmetic (proleptic Gregorian, UTC) -------------------

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m,
                     unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[12] = {31, 28, 31, 30, 31, 30,
                                         31, 31, 30, 31, 30, 31};
  if (m == 2) {
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[m - 1];
}

// ---- Field parsing ----------------------------------------------------

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

bool parse_double_field(const std::string& text, double& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && errno == 0 &&
         std::isfinite(out);
}

bool parse_int_field(const std::string& text, int& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long value = std::strtol(text.c_str(), &end, 10);
  if (end != text.c_str() + text.size() || errno != 0) return false;
  if (value < INT_MIN || value > INT_MAX) return false;
  out = static_cast<int>(value);
  return true;
}

void strip_carriage_return(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string fmt(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

// ---- Binary bundle encoding -------------------------------------------

constexpr char kBundleMagic[8] = {'C', 'S', 'G', 'E', 'B', 'N', 'D', 'L'};
constexpr std::uint32_t kBundleVersion = 1;

class ByteWriter {
 public:
  std::string buffer;

  void raw(const void* data, std::size_t n) {
    buffer.append(static_cast<const char*>(data), n);
  }
  void u8(std::uint8_t v) { buffer.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> vec() {
    const std::uint64_t n = u64();
    if (n > (data_.size() - pos_) / 8) {
      throw std::runtime_error("bundle truncated");
    }
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::copy_n(data_.data() + pos_, n, static_cast<char*>(out));
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw std::runtime_error("bundle truncated");
    }
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

std::vector<double> sized_vec(ByteReader& reader, std::size_t expected,
                              const char* what) {
  std::vector<double> v = reader.vec();
  if (v.size() != expected) {
    throw std::runtime_error(std::string("bundle corrupt: ") + what +
                             " has length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(expected));
  }
  return v;
}

// ---- JSON helpers -----------------------------------------------------

using nlohmann::json;

json eta_to_json(const EtaVector& eta) {
  return json(std::vector<double>(eta.v.begin(), eta.v.end()));
}

EtaVector eta_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.size() != EtaVector::kSize) {
    throw std::invalid_argument(std::string(key) +
                                " must be an array of 6 numbers");
  }
  EtaVector eta;
  for (int s = 0; s < EtaVector::kSize; ++s) {
    eta.v[s] = j[s].get<double>();
  }
  return eta;
}

}  // namespace

// ---- Timestamps -------------------------------------------------------

std::int64_t parse_timestamp(const std::string& text) {
  const auto fail = [&]() {
    throw std::invalid_argument("invalid timestamp \"" + text +
                                "\"; expected YYYY-MM-DDThh:mm:ssZ");
  };
  int y = 0;
  int mo = 0;
  int d = 0;
  int h = 0;
  int mi = 0;
  int s = 0;
  char z = 0;
  int consumed = 0;
  if (text.size() != 20 ||
      std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c%n", &y, &mo, &d,
                  &h, &mi, &s, &z, &consumed) != 7 ||
      z != 'Z' || consumed != 20) {
    fail();
  }
  if (mo < 1 || mo > 12 || d < 1 ||
      d > static_cast<int>(days_in_month(y, static_cast<unsigned>(mo))) ||
      h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
    fail();
  }
  return days_from_civil(y, static_cast<unsigned>(mo),
                         static_cast<unsigned>(d)) *
             86400 +
         h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0;
  unsigned d = 0;
  civil_from_days(days, y, m, d);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// ---- Ingestion --------------------------------------------------------

DataSet ingest(const std::vector<std::string>& paths, const LeadGrid& grid,
               IngestReport* report) {
  grid.validate();
  if (paths.empty()) {
    throw std::invalid_argument("need at least one input file");
  }
  IngestReport local;
  IngestReport& rep = report != nullptr ? *report : local;
  rep = IngestReport{};

  std::vector<ForecastRecord> records;
  for (std::size_t psi = 0; psi < paths.size(); ++psi) {
    FileIngest file;
    file.path = paths[psi];
    std::ifstream in(paths[psi], std::ios::binary);
    if (!in) {
      throw std::runtime_error("cannot open " + paths[psi]);
    }
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error(paths[psi] + ":1: missing header row");
    }
    strip_carriage_return(line);
    const std::size_t header_columns = split_fields(line).size();
    if (header_columns != 9) {
      throw std::runtime_error(paths[psi] + ":1: expected 9 columns, found " +
                               std::to_string(header_columns));
    }

    std::set<std::pair<std::int64_t, int>> seen;
    while (std::getline(in, line)) {
      strip_carriage_return(line);
      if (line.empty()) continue;
      ++file.rows_read;
      const std::vector<std::string> fields = split_fields(line);
      if (fields.size() != 9) {
        ++file.dropped_parse;
        continue;
      }
      std::int64_t target = 0;
      try {
        target = parse_timestamp(fields[0]);
      } catch (const std::invalid_argument&) {
        ++file.dropped_parse;
        continue;
      }
      int lead = 0;
      double power = 0.0;
      std::vector<double> features(6);
      bool ok = parse_int_field(fields[1], lead);
      for (int f = 0; ok && f < 6; ++f) {
        ok = parse_double_field(fields[2 + f], features[f]);
      }
      ok = ok && parse_double_field(fields[8], power);
      if (!ok) {
        ++file.dropped_parse;
        continue;
      }
      if (!grid.contains(lead)) {
        ++file.dropped_lead;
        continue;
      }
      if (power < -0.01 || power > 1.05) {
        ++file.dropped_power;
        continue;
      }
      const std::int64_t origin =
          target - static_cast<std::int64_t>(lead) * grid.delta_seconds;
      if (!seen.emplace(origin, lead).second) {
        ++file.dropped_duplicate;
        continue;
      }

      ForecastRecord record;
      record.origin = origin;
      record.lead = lead;
      record.weather_model = static_cast<int>(psi) + 1;
      record.features = std::move(features);
      record.observation = std::clamp(power, 0.0, 1.0);
      records.push_back(std::move(record));
      ++file.rows_kept;
    }
    rep.files.push_back(std::move(file));
  }

  // The power measured at each origin comes from whichever row targets
  // that time; the first occurrence wins, scanning in file then row order.
  std::unordered_map<std::int64_t, double> measured;
  measured.reserve(records.size());
  for (const ForecastRecord& record : records) {
    const std::int64_t target =
        record.origin +
        static_cast<std::int64_t>(record.lead) * grid.delta_seconds;
    measured.emplace(target, *record.observation);
  }
  for (ForecastRecord& record : records) {
    const auto it = measured.find(record.origin);
    if (it != measured.end()) {
      record.recent_power_at_origin = it->second;
    } else {
      ++rep.recent_power_missing;
    }
  }

  return make_dataset(std::move(records), grid,
                      static_cast<int>(paths.size()),
                      std::vector<int>(paths.size(), 6),
                      FeatureRangeCheck::skip);
}

// ---- Normalization ----------------------------------------------------

FeatureNormalization fit_normalization(
    const DataSet& raw, const std::vector<std::int64_t>& origins) {
  if (origins.empty()) {
    throw std::invalid_argument("normalization needs at least one origin");
  }
  std::vector<std::int64_t> sorted = origins;
  std::sort(sorted.begin(), sorted.end());

  FeatureNormalization norm;
  norm.lo.resize(raw.weather_models);
  norm.hi.resize(raw.weather_models);
  std::vector<bool> any(raw.weather_models, false);
  for (int psi = 0; psi < raw.weather_models; ++psi) {
    norm.lo[psi].assign(raw.feature_dims[psi],
                        std::numeric_limits<double>::infinity());
    norm.hi[psi].assign(raw.feature_dims[psi],
                        -std::numeric_limits<double>::infinity());
  }
  for (const ForecastRecord& record : raw.records) {
    if (!std::binary_search(sorted.begin(), sorted.end(), record.origin)) {
      continue;
    }
    const int psi = record.weather_model - 1;
    any[psi] = true;
    for (std::size_t d = 0; d < record.features.size(); ++d) {
      norm.lo[psi][d] = std::min(norm.lo[psi][d], record.features[d]);
      norm.hi[psi][d] = std::max(norm.hi[psi][d], record.features[d]);
    }
  }
  for (int psi = 0; psi < raw.weather_models; ++psi) {
    if (!any[psi]) {
      throw std::invalid_argument(
          "weather model " + std::to_string(psi + 1) +
          " has no records among the normalization origins");
    }
  }
  return norm;
}

DataSet apply_normalization(const DataSet& raw,
                            const FeatureNormalization& normalization) {
  if (static_cast<int>(normalization.lo.size()) != raw.weather_models ||
      static_cast<int>(normalization.hi.size()) != raw.weather_models) {
    throw std::invalid_argument(
        "normalization does not match the weather model count");
  }
  std::vector<ForecastRecord> records = raw.records;
  for (ForecastRecord& record : records) {
    const int psi = record.weather_model - 1;
    const std::vector<double>& lo = normalization.lo[psi];
    const std::vector<double>& hi = normalization.hi[psi];
    if (record.features.size() != lo.size()) {
      throw std::invalid_argument(
          "normalization does not match the feature dimensions");
    }
    for (std::size_t d = 0; d < record.features.size(); ++d) {
      const double range = hi[d] - lo[d];
      record.features[d] =
          range > 0.0
              ? std::clamp((record.features[d] - lo[d]) / range, 0.0, 1.0)
              : 0.0;
    }
  }
  return make_dataset(std::move(records), raw.grid, raw.weather_models,
                      raw.feature_dims, FeatureRangeCheck::enforce);
}

double denormalize(const FeatureNormalization& normalization,
                   int weather_model, int dim, double value) {
  const int psi = weather_model - 1;
  if (psi < 0 || psi >= static_cast<int>(normalization.lo.size()) ||
      dim < 0 || dim >= static_cast<int>(normalization.lo[psi].size())) {
    throw std::invalid_argument("normalization index out of range");
  }
  const double lo = normalization.lo[psi][dim];
  const double hi = normalization.hi[psi][dim];
  return lo + value * (hi - lo);
}

// ---- Bundles ----------------------------------------------------------

void save_bundle(const Bundle& bundle, const std::string& path) {
  const WeightState& state = bundle.state;
  if (!state.fitted()) {
    throw std::invalid_argument("cannot save an unfitted bundle");
  }
  const int members = state.weather_models * state.power_models;
  if (static_cast<int>(bundle.forecasters.size()) != members) {
    throw std::invalid_argument(
        "bundle must carry one forecaster per member");
  }

  ByteWriter w;
  w.raw(kBundleMagic, sizeof kBundleMagic);
  w.u32(kBundleVersion);

  w.i32(state.grid.k_min);
  w.i32(state.grid.k_max);
  w.i64(state.grid.delta_seconds);
  w.u32(static_cast<std::uint32_t>(state.weather_models));
  w.u32(static_cast<std::uint32_t>(state.power_models));
  for (double e : state.eta.v) w.f64(e);
  w.f64(state.epsilon);
  w.i32(state.smoothing_window);

  w.vec(state.global_weather);
  for (const auto& row : state.global_power) w.vec(row);
  for (const auto& row : state.lead_weather) w.vec(row);
  for (const auto& per_lead : state.lead_power) {
    for (const auto& row : per_lead) w.vec(row);
  }

  w.u32(static_cast<std::uint32_t>(state.historic.size()));
  for (const HistoricStore& store : state.historic) {
    w.i32(store.dims);
    w.i32(store.neighbor_count);
    w.u64(store.rows());
    w.vec(store.features);
    w.vec(store.feature_mean);
    w.vec(store.feature_scale);
    w.u32(static_cast<std::uint32_t>(store.member_abs_errors.size()));
    for (const auto& errors : store.member_abs_errors) w.vec(errors);
  }

  w.u32(static_cast<std::uint32_t>(bundle.forecasters.size()));
  for (const ForecasterState& f : bundle.forecasters) {
    w.u32(static_cast<std::uint32_t>(f.kind));
    w.i32(f.feature_dims);
    w.vec(f.coefficients);
    w.u8(f.ridge_fallback ? 1 : 0);
    w.i32(f.neighbor_count);
    w.vec(f.train_features);
    w.vec(f.train_targets);
    w.vec(f.feature_mean);
    w.vec(f.feature_scale);
  }

  w.u32(static_cast<std::uint32_t>(bundle.normalization.lo.size()));
  for (std::size_t psi = 0; psi < bundle.normalization.lo.size(); ++psi) {
    w.vec(bundle.normalization.lo[psi]);
    w.vec(bundle.normalization.hi[psi]);
  }

  write_text_atomic(path, w.buffer);
}

Bundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string data = buffer.str();

  ByteReader r(data);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (!std::equal(magic, magic + sizeof magic, kBundleMagic)) {
    throw std::runtime_error(path + " is not a bundle file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kBundleVersion) {
    throw std::runtime_error(
        "bundle version mismatch: expected " +
        std::to_string(kBundleVersion) + ", found " + std::to_string(version));
  }

  Bundle bundle;
  WeightState& state = bundle.state;
  state.grid.k_min = r.i32();
  state.grid.k_max = r.i32();
  state.grid.delta_seconds = r.i64();
  state.grid.validate();
  state.weather_models = static_cast<int>(r.u32());
  state.power_models = static_cast<int>(r.u32());
  if (state.weather_models < 1 || state.power_models < 1 ||
      state.weather_models > 1000000 || state.power_models > 1000000) {
    throw std::runtime_error("bundle corrupt: implausible member counts");
  }
  for (double& e : state.eta.v) e = r.f64();
  state.eta.validate();
  state.epsilon = r.f64();
  state.smoothing_window = r.i32();

  const std::size_t psi_n = static_cast<std::size_t>(state.weather_models);
  const std::size_t phi_n = static_cast<std::size_t>(state.power_models);
  const std::size_t leads = static_cast<std::size_t>(state.grid.lead_count());
  state.global_weather = sized_vec(r, psi_n, "global weather weights");
  state.global_power.resize(psi_n);
  for (auto& row : state.global_power) {
    row = sized_vec(r, phi_n, "global power weights");
  }
  state.lead_weather.resize(leads);
  for (auto& row : state.lead_weather) {
    row = sized_vec(r, psi_n, "lead weather weights");
  }
  state.lead_power.resize(psi_n);
  for (auto& per_lead : state.lead_power) {
    per_lead.resize(leads);
    for (auto& row : per_lead) {
      row = sized_vec(r, phi_n, "lead power weights");
    }
  }

  const std::uint32_t store_count = r.u32();
  if (store_count != psi_n) {
    throw std::runtime_error("bundle corrupt: expected " +
                             std::to_string(psi_n) + " historic stores, found " +
                             std::to_string(store_count));
  }
  state.historic.resize(store_count);
  for (HistoricStore& store : state.historic) {
    store.dims = r.i32();
    store.neighbor_count = r.i32();
    if (store.dims < 1 || store.neighbor_count < 1) {
      throw std::runtime_error("bundle corrupt: invalid store header");
    }
    const std::uint64_t rows = r.u64();
    store.features = sized_vec(
        r, static_cast<std::size_t>(rows) * store.dims, "store features");
    store.feature_mean = sized_vec(r, store.dims, "store feature means");
    store.feature_scale = sized_vec(r, store.dims, "store feature scales");
    const std::uint32_t error_lists = r.u32();
    if (error_lists != phi_n) {
      throw std::runtime_error(
          "bundle corrupt: store error lists do not match the power models");
    }
    store.member_abs_errors.resize(error_lists);
    for (auto& errors : store.member_abs_errors) {
      errors = sized_vec(r, rows, "store errors");
    }
  }

  const std::uint32_t forecaster_count = r.u32();
  if (forecaster_count != psi_n * phi_n) {
    throw std::runtime_error("bundle corrupt: expected " +
                             std::to_string(psi_n * phi_n) +
                             " forecasters, found " +
                             std::to_string(forecaster_count));
  }
  bundle.forecasters.resize(forecaster_count);
  for (ForecasterState& f : bundle.forecasters) {
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(ForecasterKind::knn_regressor)) {
      throw std::runtime_error("bundle corrupt: unknown forecaster kind");
    }
    f.kind = static_cast<ForecasterKind>(kind);
    f.feature_dims = r.i32();
    f.coefficients = r.vec();
    f.ridge_fallback = r.u8() != 0;
    f.neighbor_count = r.i32();
    f.train_features = r.vec();
    f.train_targets = r.vec();
    f.feature_mean = r.vec();
    f.feature_scale = r.vec();
  }

  const std::uint32_t norm_models = r.u32();
  if (norm_models != psi_n) {
    throw std::runtime_error(
        "bundle corrupt: normalization does not match the weather models");
  }
  bundle.normalization.lo.resize(norm_models);
  bundle.normalization.hi.resize(norm_models);
  for (std::size_t psi = 0; psi < norm_models; ++psi) {
    bundle.normalization.lo[psi] = r.vec();
    bundle.normalization.hi[psi] = r.vec();
    if (bundle.normalization.lo[psi].size() !=
        bundle.normalization.hi[psi].size()) {
      throw std::runtime_error("bundle corrupt: normalization range mismatch");
    }
  }

  if (!r.done()) {
    throw std::runtime_error("bundle corrupt: trailing bytes");
  }
  return bundle;
}

// ---- Experiment configuration -----------------------------------------

namespace {

void validate_config(const ExperimentConfig& config) {
  if (config.weather_models.empty()) {
    throw std::invalid_argument("config needs at least one weather model");
  }
  if (config.power_models.empty()) {
    throw std::invalid_argument("config needs at least one power model");
  }
  config.grid.validate();
  config.train.validate();
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }

  ExperimentConfig config;
  try {
    for (const json& model : j.at("weather_models")) {
      WeatherSource source;
      source.label = model.value("label", std::string{});
      source.path = model.at("path").get<std::string>();
      if (source.label.empty()) source.label = source.path;
      config.weather_models.push_back(std::move(source));
    }
    if (j.contains("power_models")) {
      config.power_models.clear();
      for (const json& kind : j["power_models"]) {
        config.power_models.push_back(
            forecaster_kind_from_string(kind.get<std::string>()));
      }
    }
    if (j.contains("lead_grid")) {
      const json& grid = j["lead_grid"];
      config.grid.k_min = grid.value("k_min", config.grid.k_min);
      config.grid.k_max = grid.value("k_max", config.grid.k_max);
      config.grid.delta_seconds =
          grid.value("delta_seconds", config.grid.delta_seconds);
    }
    if (j.contains("split")) {
      const json& split = j["split"];
      config.split.test_fraction =
          split.value("test_fraction", config.split.test_fraction);
      config.split.folds = split.value("folds", config.split.folds);
      config.split.rng_seed = split.value("rng_seed", config.split.rng_seed);
    }
    if (j.contains("train")) {
      const json& train = j["train"];
      TrainConfig& t = config.train;
      if (train.contains("zeta") && !train["zeta"].is_null()) {
        t.zeta = train["zeta"].get<double>();
      }
      if (train.contains("zeta_grid")) {
        t.zeta_grid = train["zeta_grid"].get<std::vector<double>>();
      }
      if (train.contains("eta_init")) {
        t.eta_init = eta_from_json(train["eta_init"], "eta_init");
      }
      t.eta_max = train.value("eta_max", t.eta_max);
      t.fn_tol = train.value("fn_tol", t.fn_tol);
      t.param_tol = train.value("param_tol", t.param_tol);
      t.max_iterations = train.value("max_iterations", t.max_iterations);
      t.neighbor_count = train.value("neighbor_count", t.neighbor_count);
      t.smoothing_window = train.value("smoothing_window", t.smoothing_window);
      t.epsilon = train.value("epsilon", t.epsilon);
      t.forecaster.knn_neighbors =
          train.value("knn_neighbors", t.forecaster.knn_neighbors);
      t.forecaster.knn_max_rows =
          train.value("knn_max_rows", t.forecaster.knn_max_rows);
      t.store_max_rows = train.value("store_max_rows", t.store_max_rows);
      if (train.contains("pinned")) {
        const json& pinned = train["pinned"];
        if (!pinned.is_array() || pinned.size() != EtaVector::kSize) {
          throw std::invalid_argument(
              "pinned must be an array of 6 numbers or nulls");
        }
        for (int s = 0; s < EtaVector::kSize; ++s) {
          if (!pinned[s].is_null()) t.pinned[s] = pinned[s].get<double>();
        }
      }
      t.joint_refine = train.value("joint_refine", t.joint_refine);
    }
    config.output_dir = j.value("output_dir", config.output_dir);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }

  validate_config(config);
  return config;
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  validate_config(config);
  json j;
  j["weather_models"] = json::array();
  for (const WeatherSource& source : config.weather_models) {
    j["weather_models"].push_back(
        json{{"label", source.label}, {"path", source.path}});
  }
  j["power_models"] = json::array();
  for (ForecasterKind kind : config.power_models) {
    j["power_models"].push_back(to_string(kind));
  }
  j["lead_grid"] = json{{"k_min", config.grid.k_min},
                        {"k_max", config.grid.k_max},
                        {"delta_seconds", config.grid.delta_seconds}};
  j["split"] = json{{"test_fraction", config.split.test_fraction},
                    {"folds", config.split.folds},
                    {"rng_seed", config.split.rng_seed}};
  const TrainConfig& t = config.train;
  json train;
  train["zeta"] = t.zeta.has_value() ? json(*t.zeta) : json(nullptr);
  train["zeta_grid"] = t.zeta_grid;
  train["eta_init"] = eta_to_json(t.eta_init);
  train["eta_max"] = t.eta_max;
  train["fn_tol"] = t.fn_tol;
  train["param_tol"] = t.param_tol;
  train["max_iterations"] = t.max_iterations;
  train["neighbor_count"] = t.neighbor_count;
  train["smoothing_window"] = t.smoothing_window;
  train["epsilon"] = t.epsilon;
  train["knn_neighbors"] = t.forecaster.knn_neighbors;
  train["knn_max_rows"] = t.forecaster.knn_max_rows;
  train["store_max_rows"] = t.store_max_rows;
  json pinned = json::array();
  for (int s = 0; s < EtaVector::kSize; ++s) {
    pinned.push_back(t.pinned[s].has_value() ? json(*t.pinned[s])
                                             : json(nullptr));
  }
  train["pinned"] = pinned;
  train["joint_refine"] = t.joint_refine;
  j["train"] = std::move(train);
  j["output_dir"] = config.output_dir;

  write_text_atomic(path, j.dump(2) + "\n");
}

// ---- Writers ----------------------------------------------------------

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path());
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path +
                             ": " + ec.message());
  }
}

void write_dataset_csv(const DataSet& data, int weather_model,
                       const std::string& path) {
  if (weather_model < 1 || weather_model > data.weather_models) {
    throw std::invalid_argument("weather model index out of range");
  }
  if (data.feature_dims[weather_model - 1] != 6) {
    throw std::invalid_argument(
        "the CSV schema requires exactly six features per record");
  }
  std::string out;
  out +=
      "time,lead_time,ws_100m,ws_10m,wd_zonal_100m,wd_meridional_100m,"
      "air_pressure,air_temperature,power\n";
  for (const ForecastRecord& record : data.records) {
    if (record.weather_model != weather_model || record.origin_lag != 0) {
      continue;
    }
    out += format_timestamp(record.origin +
                            static_cast<std::int64_t>(record.lead) *
                                data.grid.delta_seconds);
    out += ',';
    out += std::to_string(record.lead);
    for (double f : record.features) {
      out += ',';
      out += fmt(f);
    }
    out += ',';
    if (record.observation.has_value()) out += fmt(*record.observation);
    out += '\n';
  }
  write_text_atomic(path, out);
}

void write_weight_trace(const std::vector<TracePrediction>& predictions,
                        const std::string& path) {
  std::string out;
  out +=
      "origin_time,lead_time,weather_model,power_model,available,global_weather,"
      "local_weather,lead_weather,global_power,local_power,lead_power,"
      "raw_product,weight,member_value,ensemble_value,uniform_fallback\n";
  for (const TracePrediction& p : predictions) {
    for (const MemberDiagnostics& d : p.prediction.members) {
      out += format_timestamp(p.origin);
      out += ',';
      out += std::to_string(p.lead);
      out += ',';
      out += std::to_string(d.member.weather_model);
      out += ',';
      out += std::to_string(d.member.power_model);
      out += ',';
      out += d.available ? '1' : '0';
      out += ',';
      out += fmt(d.global_weather);
      out += ',';
      out += fmt(d.local_weather);
      out += ',';
      out += fmt(d.lead_weather);
      out += ',';
      out += fmt(d.global_power);
      out += ',';
      out += fmt(d.local_power);
      out += ',';
      out += fmt(d.lead_power);
      out += ',';
      out += fmt(d.raw_product);
      out += ',';
      out += fmt(d.weight);
      out += ',';
      if (d.value.has_value()) out += fmt(*d.value);
      out += ',';
      out += fmt(p.prediction.value);
      out += ',';
      out += p.prediction.uniform_fallback ? '1' : '0';
      out += '\n';
    }
  }
  write_text_atomic(path, out);
}

void write_forecasts_csv(const std::vector<ForecastRow>& rows,
                         const std::string& path) {
  std::string out = "origin_time,lead_time,prediction,observation\n";
  for (const ForecastRow& row : rows) {
    out += format_timestamp(row.origin);
    out += ',';
    out += std::to_string(row.lead);
    out += ',';
    out += fmt(row.prediction);
    out += ',';
    if (row.observation.has_value()) out += fmt(*row.observation);
    out += '\n';
  }
  write_text_atomic(path, out);
}

// ---- Score table ------------------------------------------------------

namespace {

void append_row(std::string& out, const std::string& metric,
                const std::string& label,
                const std::vector<std::string>& cells) {
  out += metric;
  out += ',';
  out += label;
  for (const std::string& cell : cells) {
    out += ',';
    out += cell;
  }
  out += '\n';
}

std::vector<std::string> fmt_all(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(fmt(v));
  return cells;
}

}  // namespace

std::string render_score_table(const ScoreTable& table,
                               const std::string& baseline_method) {
  const int baseline = table.method_index(baseline_method);
  const std::size_t methods = table.methods.size();
  const std::size_t datasets = table.datasets.size();

  std::string out = "metric,dataset";
  for (const std::string& method : table.methods) {
    out += ',';
    out += method;
  }
  out += '\n';

  for (std::size_t d = 0; d < datasets; ++d) {
    std::vector<std::string> cells;
    cells.reserve(methods);
    for (std::size_t m = 0; m < methods; ++m) {
      cells.push_back(fmt(table.rmse[m][d]));
    }
    append_row(out, "rmse", table.datasets[d], cells);
  }
  append_row(out, "rmse", "Avg.", fmt_all(table.mean_rmse()));
  append_row(out, "rmse", "Std.", fmt_all(table.std_rmse()));
  append_row(out, "rmse", "Skill", fmt_all(table.skill_of_means(baseline_method)));
  append_row(out, "rmse", "SkillMean",
             fmt_all(table.mean_of_skills(baseline_method)));
  append_row(out, "rmse", "#Wins", fmt_all(table.rmse_wins().wins));

  // R-squared block: cells stay blank where the score is undefined, and a
  // footer is blank when its inputs are incomplete.
  for (std::size_t d = 0; d < datasets; ++d) {
    std::vector<std::string> cells;
    cells.reserve(methods);
    for (std::size_t m = 0; m < methods; ++m) {
      cells.push_back(table.r2[m][d].has_value() ? fmt(*table.r2[m][d])
                                                 : std::string{});
    }
    append_row(out, "r2", table.datasets[d], cells);
  }

  std::vector<std::optional<double>> r2_mean(methods);
  std::vector<std::optional<double>> r2_std(methods);
  bool complete = true;
  for (std::size_t m = 0; m < methods; ++m) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < datasets; ++d) {
      if (table.r2[m][d].has_value()) {
        acc += *table.r2[m][d];
        ++n;
      } else {
        complete = false;
      }
    }
    if (n == 0) continue;
    const double mean = acc / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t d = 0; d < datasets; ++d) {
      if (table.r2[m][d].has_value()) {
        const double c = *table.r2[m][d] - mean;
        var += c * c;
      }
    }
    r2_mean[m] = mean;
    r2_std[m] = std::sqrt(var / static_cast<double>(n));
  }

  const auto opt_cells = [&](const std::vector<std::optional<double>>& v) {
    std::vector<std::string> cells;
    cells.reserve(v.size());
    for (const std::optional<double>& x : v) {
      cells.push_back(x.has_value() ? fmt(*x) : std::string{});
    }
    return cells;
  };
  append_row(out, "r2", "Avg.", opt_cells(r2_mean));
  append_row(out, "r2", "Std.", opt_cells(r2_std));

  // Skill with higher-is-better semantics: relative gain over the baseline.
  std::vector<std::optional<double>> r2_skill(methods);
  std::vector<std::optional<double>> r2_skill_mean(methods);
  if (r2_mean[baseline].has_value() && *r2_mean[baseline] > 0.0) {
    for (std::size_t m = 0; m < methods; ++m) {
      if (r2_mean[m].has_value()) {
        r2_skill[m] =
            (*r2_mean[m] - *r2_mean[baseline]) / *r2_mean[baseline];
      }
    }
  }
  for (std::size_t m = 0; m < methods; ++m) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < datasets; ++d) {
      const auto& mine = table.r2[m][d];
      const auto& base = table.r2[baseline][d];
      if (mine.has_value() && base.has_value() && *base > 0.0) {
        acc += (*mine - *base) / *base;
        ++n;
      }
    }
    if (n > 0) r2_skill_mean[m] = acc / static_cast<double>(n);
  }
  append_row(out, "r2", "Skill", opt_cells(r2_skill));
  append_row(out, "r2", "SkillMean", opt_cells(r2_skill_mean));

  std::vector<std::string> win_cells(methods);
  if (complete && datasets > 0) {
    std::vector<std::vector<double>> scores(methods,
                                            std::vector<double>(datasets));
    for (std::size_t m = 0; m < methods; ++m) {
      for (std::size_t d = 0; d < datasets; ++d) {
        scores[m][d] = *table.r2[m][d];
      }
    }
    const WinTally tally = wins(scores, Direction::higher_better);
    for (std::size_t m = 0; m < methods; ++m) {
      win_cells[m] = fmt(tally.wins[m]);
    }
  }
  append_row(out, "r2", "#Wins", win_cells);
  return out;
}

void write_score_table(const ScoreTable& table,
                       const std::string& baseline_method,
                       const std::string& path) {
  write_text_atomic(path, render_score_table(table, baseline_method));
}

// ---- Fit report -------------------------------------------------------

std::string render_fit_report(const FitReport& report) {
  json j;
  j["weather_models"] = report.weather_models;
  j["power_models"] = report.power_models;
  j["train_origins"] = report.train_origins;
  j["test_origins"] = report.test_origins;
  j["chosen_eta"] = eta_to_json(report.chosen_eta);
  j["chosen_zeta"] = report.chosen_zeta;
  j["chosen_mean_validation_rmse"] = report.chosen_mean_validation_rmse;
  j["predict_calls_precompute"] = report.predict_calls_precompute;
  j["predict_calls_optimize"] = report.predict_calls_optimize;
  j["objective_evaluations"] = report.objective_evaluations;
  j["candidates"] = json::array();
  for (const FitCandidate& candidate : report.candidates) {
    j["candidates"].push_back(
        json{{"fold", candidate.fold},
             {"zeta", candidate.zeta},
             {"eta", eta_to_json(candidate.eta)},
             {"own_fold_rmse", candidate.own_fold_rmse},
             {"mean_validation_rmse", candidate.mean_validation_rmse},
             {"selected", candidate.selected}});
  }
  j["notes"] = report.notes;
  return j.dump(2) + "\n";
}

}  // namespace csge
