#include "csge/io.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "csge/synth.hpp"
#include "csge/training.hpp"

#include "doctest.h"
#include "json.hpp"

using namespace csge;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kBase = 1577836800;  // 2020-01-01T00:00:00Z

/// Fresh scratch directory per test case.
fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("csge_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

const std::string kCsvHeader =
    "time,lead_time,ws_100m,ws_10m,wd_zonal_100m,wd_meridional_100m,"
    "air_pressure,air_temperature,power\n";

const ForecastRecord* find_record(const DataSet& data, std::int64_t origin,
                                  int lead, int weather_model = 1) {
  for (const ForecastRecord& record : data.records) {
    if (record.origin == origin && record.lead == lead &&
        record.weather_model == weather_model && record.origin_lag == 0) {
      return &record;
    }
  }
  return nullptr;
}

/// Small fitted artifact for bundle tests: three weather models, two power
/// models, short horizon.
Bundle small_bundle(DataSet* data_out = nullptr) {
  ScenarioSpec spec;
  spec.name = "bundle";
  spec.rng_seed = 99;
  spec.n_origins = 150;
  spec.grid = LeadGrid{1, 3, 3600};
  spec.feature_dims = 3;
  spec.weather_models = {WeatherModelSpec{0.0, 0.05, 0.0},
                         WeatherModelSpec{0.05, 0.1, 0.1},
                         WeatherModelSpec{-0.05, 0.2, 0.0}};
  const DataSet data = generate(spec);

  TrainConfig config;
  config.zeta = 0.0;
  config.max_iterations = 40;
  const FitResult result =
      fit_csge(data, {ForecasterKind::persistence,
                      ForecasterKind::linear_regression},
               config, SplitPlan{});

  Bundle bundle;
  bundle.state = result.state;
  bundle.forecasters = result.forecasters;
  bundle.normalization = fit_normalization(data, split(data, SplitPlan{}).train);
  if (data_out != nullptr) *data_out = data;
  return bundle;
}

}  // namespace

TEST_CASE("timestamps format and parse as strict UTC") {
  CHECK(parse_timestamp("2020-01-01T00:00:00Z") == kBase);
  CHECK(format_timestamp(kBase) == "2020-01-01T00:00:00Z");
  CHECK(parse_timestamp("2020-02-29T12:34:56Z") == 1582979696);
  CHECK(format_timestamp(1582979696) == "2020-02-29T12:34:56Z");

  for (std::int64_t t : {std::int64_t{0}, kBase, std::int64_t{1582979696},
                         std::int64_t{1609459199}, std::int64_t{1893456000}}) {
    CHECK(parse_timestamp(format_timestamp(t)) == t);
  }
  for (const char* text :
       {"1970-01-01T00:00:00Z", "2019-12-31T23:00:00Z",
        "2024-02-29T23:59:59Z", "2030-06-15T07:08:09Z"}) {
    CHECK(format_timestamp(parse_timestamp(text)) == text);
  }

  for (const char* bad :
       {"", "garbage", "2020-13-01T00:00:00Z", "2020-00-10T00:00:00Z",
        "2020-02-30T00:00:00Z", "2021-02-29T00:00:00Z",
        "2020-01-32T00:00:00Z", "2020-01-00T00:00:00Z",
        "2020-01-01 00:00:00Z", "2020-01-01T00:00:00",
        "2020-01-01T24:00:00Z", "2020-01-01T00:60:00Z",
        "2020-01-01T00:00:60Z", "2020-1-01T00:00:00Z",
        "20-01-01T00:00:00Z", "2020-01-01T00:00:00Zx"}) {
    CHECK_THROWS_AS(parse_timestamp(bad), std::invalid_argument);
  }
}

TEST_CASE("ingestion rejects malformed headers with file and line context") {
  const fs::path dir = scratch_dir("headers");
  const LeadGrid grid{1, 2, 3600};

  const fs::path short_header = dir / "short.csv";
  write_file(short_header, "time,lead_time,power\nrow\n");
  CHECK_THROWS_WITH_AS(ingest({short_header.string()}, grid),
                       doctest::Contains(":1: expected 9 columns, found 3"),
                       std::runtime_error);

  const fs::path empty = dir / "empty.csv";
  write_file(empty, "");
  CHECK_THROWS_WITH_AS(ingest({empty.string()}, grid),
                       doctest::Contains(":1: missing header row"),
                       std::runtime_error);

  CHECK_THROWS_WITH_AS(ingest({(dir / "absent.csv").string()}, grid),
                       doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("ingestion recovers origins, filters rows, and attaches power") {
  const fs::path dir = scratch_dir("ingest");
  const fs::path path = dir / "model_1.csv";
  const std::string features = "0.1,0.2,0.3,0.4,0.5,0.6";
  std::string csv = kCsvHeader;
  csv += "2020-01-01T01:00:00Z,1," + features + ",0.5\n";    // origin kBase
  csv += "2020-01-01T02:00:00Z,2," + features + ",0.6\n";    // origin kBase
  csv += "2020-01-01T02:00:00Z,1," + features + ",0.6\n";    // kBase + 3600
  csv += "2020-01-01T00:00:00Z,1," + features + ",0.3\n";    // kBase - 3600
  csv += "2020-01-01T01:00:00Z,1," + features + ",0.9\n";    // duplicate key
  csv += "2020-01-01T03:00:00Z,3," + features + ",0.5\n";    // lead off-grid
  csv += "2020-01-01T03:00:00Z,1," + features + ",1.2\n";    // power range
  csv += "2020-01-01T04:00:00Z,1,0.1,0.2,0.3,0.4,0.5,0.5\n"; // 8 columns
  csv += "2020-01-01T05:00:00Z,1," + features + ",abc\n";    // bad power
  csv += "2020-01-01T03:00:00Z,2," + features + ",1.02\n";   // clipped
  write_file(path, csv);

  IngestReport report;
  const DataSet data = ingest({path.string()}, LeadGrid{1, 2, 3600}, &report);

  REQUIRE(report.files.size() == 1);
  const FileIngest& file = report.files[0];
  CHECK(file.rows_read == 10);
  CHECK(file.rows_kept == 5);
  CHECK(file.dropped_parse == 2);
  CHECK(file.dropped_lead == 1);
  CHECK(file.dropped_power == 1);
  CHECK(file.dropped_duplicate == 1);
  CHECK(report.recent_power_missing == 1);

  CHECK(data.records.size() == 5);
  CHECK(data.weather_models == 1);
  CHECK(data.origins().size() == 3);

  // The origin is the target time minus the lead.
  const ForecastRecord* first = find_record(data, kBase, 1);
  REQUIRE(first != nullptr);
  CHECK(first->features == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  CHECK(first->observation == 0.5);
  // The first row for a duplicate key wins.
  CHECK(first->observation != 0.9);

  // Power measured at each origin comes from the row targeting that time.
  CHECK(first->recent_power_at_origin == 0.3);
  const ForecastRecord* second = find_record(data, kBase, 2);
  REQUIRE(second != nullptr);
  CHECK(second->recent_power_at_origin == 0.3);
  const ForecastRecord* later = find_record(data, kBase + 3600, 1);
  REQUIRE(later != nullptr);
  CHECK(later->recent_power_at_origin == 0.5);
  const ForecastRecord* earliest = find_record(data, kBase - 3600, 1);
  REQUIRE(earliest != nullptr);
  CHECK_FALSE(earliest->recent_power_at_origin.has_value());

  // In-tolerance power above one is clipped to the unit interval.
  const ForecastRecord* clipped = find_record(data, kBase + 3600, 2);
  REQUIRE(clipped != nullptr);
  CHECK(clipped->observation == 1.0);
}

TEST_CASE("dataset CSV writing and ingestion are mutually inverse") {
  const fs::path dir = scratch_dir("roundtrip");
  ScenarioSpec spec;
  spec.name = "roundtrip";
  spec.rng_seed = 5;
  spec.n_origins = 30;
  spec.grid = LeadGrid{1, 2, 3600};
  spec.weather_models = {WeatherModelSpec{0.0, 0.05, 0.0},
                         WeatherModelSpec{0.1, 0.2, 0.1}};
  const DataSet data = generate(spec);

  const fs::path first_1 = dir / "m1.csv";
  const fs::path first_2 = dir / "m2.csv";
  write_dataset_csv(data, 1, first_1.string());
  write_dataset_csv(data, 2, first_2.string());
  const std::string bytes_1 = read_file(first_1);
  const std::string bytes_2 = read_file(first_2);
  CHECK(bytes_1.substr(0, kCsvHeader.size()) == kCsvHeader);

  IngestReport report;
  const DataSet round = ingest({first_1.string(), first_2.string()},
                               spec.grid, &report);
  CHECK(report.files[0].rows_kept == report.files[0].rows_read);
  CHECK(report.files[1].rows_kept == report.files[1].rows_read);

  const fs::path second_1 = dir / "m1_again.csv";
  const fs::path second_2 = dir / "m2_again.csv";
  write_dataset_csv(round, 1, second_1.string());
  write_dataset_csv(round, 2, second_2.string());
  CHECK(read_file(second_1) == bytes_1);
  CHECK(read_file(second_2) == bytes_2);
}

TEST_CASE("the dataset CSV schema is fixed at six features") {
  ScenarioSpec spec;
  spec.name = "narrow";
  spec.n_origins = 10;
  spec.grid = LeadGrid{1, 1, 3600};
  spec.feature_dims = 3;
  const DataSet data = generate(spec);
  CHECK_THROWS_AS(write_dataset_csv(data, 1, "/tmp/never_written.csv"),
                  std::invalid_argument);
}

TEST_CASE("feature normalization scales to the unit interval and back") {
  std::vector<ForecastRecord> records;
  auto add = [&records](std::int64_t origin, int model, double a, double b) {
    ForecastRecord record;
    record.origin = origin;
    record.lead = 1;
    record.weather_model = model;
    record.features = {a, b};
    record.observation = 0.5;
    records.push_back(std::move(record));
  };
  add(kBase, 1, 2.0, 7.0);
  add(kBase + 3600, 1, 4.0, 7.0);   // second feature is constant
  add(kBase + 7200, 1, 10.0, 7.0);
  add(kBase, 2, -1.0, 0.0);
  add(kBase + 3600, 2, 1.0, 4.0);
  add(kBase + 7200, 2, 3.0, 2.0);
  const DataSet raw = make_dataset(std::move(records), LeadGrid{1, 1, 3600}, 2,
                                   {2, 2}, FeatureRangeCheck::skip);

  const std::vector<std::int64_t> all{kBase, kBase + 3600, kBase + 7200};
  const FeatureNormalization norm = fit_normalization(raw, all);
  CHECK(norm.lo[0] == std::vector<double>{2.0, 7.0});
  CHECK(norm.hi[0] == std::vector<double>{10.0, 7.0});
  CHECK(norm.lo[1] == std::vector<double>{-1.0, 0.0});
  CHECK(norm.hi[1] == std::vector<double>{3.0, 4.0});

  const DataSet scaled = apply_normalization(raw, norm);
  const ForecastRecord* mid = find_record(scaled, kBase + 3600, 1);
  REQUIRE(mid != nullptr);
  CHECK(mid->features[0] == doctest::Approx(0.25).epsilon(1e-12));
  // A degenerate dimension collapses to zero.
  CHECK(mid->features[1] == 0.0);
  for (const ForecastRecord& record : scaled.records) {
    for (double f : record.features) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }

  // Round trip through denormalize recovers the raw value.
  const ForecastRecord* raw_mid = find_record(raw, kBase + 3600, 1, 2);
  const ForecastRecord* scaled_mid = find_record(scaled, kBase + 3600, 1, 2);
  REQUIRE(raw_mid != nullptr);
  REQUIRE(scaled_mid != nullptr);
  for (int d = 0; d < 2; ++d) {
    CHECK(denormalize(norm, 2, d, scaled_mid->features[d]) ==
          doctest::Approx(raw_mid->features[d]).epsilon(1e-12));
  }
  // A degenerate dimension denormalizes to its single value.
  CHECK(denormalize(norm, 1, 1, 0.0) == 7.0);
  CHECK_THROWS_AS(denormalize(norm, 3, 0, 0.5), std::invalid_argument);

  // Fitting on origins that miss a model entirely is an error.
  std::vector<ForecastRecord> partial;
  {
    ForecastRecord record;
    record.origin = kBase;
    record.lead = 1;
    record.weather_model = 1;
    record.features = {1.0};
    record.observation = 0.5;
    partial.push_back(record);
    record.origin = kBase + 3600;
    record.weather_model = 2;
    partial.push_back(record);
  }
  const DataSet sparse = make_dataset(std::move(partial), LeadGrid{1, 1, 3600},
                                      2, {1, 1}, FeatureRangeCheck::skip);
  CHECK_THROWS_WITH_AS(fit_normalization(sparse, {kBase}),
                       doctest::Contains("weather model 2 has no records"),
                       std::invalid_argument);

  // Values outside the fitted range clip instead of leaving the interval.
  FeatureNormalization tight = norm;
  tight.hi[0][0] = 5.0;
  const DataSet clipped = apply_normalization(raw, tight);
  const ForecastRecord* top = find_record(clipped, kBase + 7200, 1);
  REQUIRE(top != nullptr);
  CHECK(top->features[0] == 1.0);
}

TEST_CASE("bundles round trip byte-stably and reproduce predictions") {
  const fs::path dir = scratch_dir("bundle");
  DataSet data;
  const Bundle bundle = small_bundle(&data);
  REQUIRE(bundle.forecasters.size() == 6);

  const fs::path path = dir / "bundle.bin";
  save_bundle(bundle, path.string());
  const std::string bytes = read_file(path);

  const Bundle loaded = load_bundle(path.string());
  CHECK(loaded.state.weather_models == 3);
  CHECK(loaded.state.power_models == 2);
  CHECK(loaded.state.eta == bundle.state.eta);
  CHECK(loaded.state.global_weather == bundle.state.global_weather);
  CHECK(loaded.state.global_power == bundle.state.global_power);
  CHECK(loaded.state.lead_weather == bundle.state.lead_weather);
  CHECK(loaded.state.lead_power == bundle.state.lead_power);
  REQUIRE(loaded.state.historic.size() == 3);
  CHECK(loaded.state.historic[0].features == bundle.state.historic[0].features);
  CHECK(loaded.state.historic[1].member_abs_errors ==
        bundle.state.historic[1].member_abs_errors);
  REQUIRE(loaded.forecasters.size() == 6);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(loaded.forecasters[j].kind == bundle.forecasters[j].kind);
    CHECK(loaded.forecasters[j].coefficients ==
          bundle.forecasters[j].coefficients);
    CHECK(loaded.forecasters[j].train_features ==
          bundle.forecasters[j].train_features);
  }
  CHECK(loaded.normalization.lo == bundle.normalization.lo);
  CHECK(loaded.normalization.hi == bundle.normalization.hi);

  // Saving the loaded bundle reproduces the file bit for bit.
  const fs::path again = dir / "again.bin";
  save_bundle(loaded, again.string());
  CHECK(read_file(again) == bytes);

  // Predictions after a round trip are bitwise identical.
  int compared = 0;
  for (const AlignedRow& row : align_all(data)) {
    const Prediction a = predict_csge(bundle.state, bundle.forecasters, row);
    const Prediction b = predict_csge(loaded.state, loaded.forecasters, row);
    CHECK(a.value == b.value);
    CHECK(a.weights == b.weights);
    if (++compared == 25) break;
  }
  CHECK(compared == 25);
}

TEST_CASE("bundle loading rejects corrupt files with precise messages") {
  const fs::path dir = scratch_dir("badbundle");
  const Bundle bundle = small_bundle();
  const fs::path path = dir / "bundle.bin";
  save_bundle(bundle, path.string());
  const std::string bytes = read_file(path);

  const fs::path wrong_magic = dir / "magic.bin";
  write_file(wrong_magic, "NOTMAGIC" + bytes.substr(8));
  CHECK_THROWS_WITH_AS(load_bundle(wrong_magic.string()),
                       doctest::Contains("is not a bundle file (bad magic)"),
                       std::runtime_error);

  std::string future = bytes;
  future[8] = 7;  // version word follows the magic, little endian
  const fs::path version = dir / "version.bin";
  write_file(version, future);
  CHECK_THROWS_WITH_AS(load_bundle(version.string()),
                       doctest::Contains(
                           "bundle version mismatch: expected 1, found 7"),
                       std::runtime_error);

  const fs::path truncated = dir / "truncated.bin";
  write_file(truncated, bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_WITH_AS(load_bundle(truncated.string()),
                       doctest::Contains("bundle truncated"),
                       std::runtime_error);

  const fs::path trailing = dir / "trailing.bin";
  write_file(trailing, bytes + "xx");
  CHECK_THROWS_WITH_AS(load_bundle(trailing.string()),
                       doctest::Contains("bundle corrupt: trailing bytes"),
                       std::runtime_error);

  CHECK_THROWS_WITH_AS(load_bundle((dir / "absent.bin").string()),
                       doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("experiment configurations round trip through JSON") {
  const fs::path dir = scratch_dir("config");
  ExperimentConfig config;
  config.weather_models = {WeatherSource{"ecmwf", "data/a.csv"},
                           WeatherSource{"icon", "data/b.csv"}};
  config.power_models = {ForecasterKind::persistence,
                         ForecasterKind::knn_regressor};
  config.grid = LeadGrid{2, 6, 1800};
  config.split.test_fraction = 0.25;
  config.split.folds = 4;
  config.split.rng_seed = 9;
  config.train.zeta = 0.01;
  config.train.zeta_grid = {0.0, 0.5};
  config.train.eta_init.v[2] = 2.5;
  config.train.eta_max = 40.0;
  config.train.fn_tol = 1e-5;
  config.train.param_tol = 1e-3;
  config.train.max_iterations = 99;
  config.train.neighbor_count = 12;
  config.train.smoothing_window = 3;
  config.train.epsilon = 1e-9;
  config.train.forecaster.knn_neighbors = 7;
  config.train.forecaster.knn_max_rows = 500;
  config.train.store_max_rows = 600;
  config.train.pinned[1] = 1.5;
  config.output_dir = "results";

  const fs::path path = dir / "config.json";
  save_config(config, path.string());
  const ExperimentConfig loaded = load_config(path.string());

  REQUIRE(loaded.weather_models.size() == 2);
  CHECK(loaded.weather_models[0].label == "ecmwf");
  CHECK(loaded.weather_models[1].path == "data/b.csv");
  CHECK(loaded.power_models ==
        std::vector<ForecasterKind>{ForecasterKind::persistence,
                                    ForecasterKind::knn_regressor});
  CHECK(loaded.grid.k_min == 2);
  CHECK(loaded.grid.k_max == 6);
  CHECK(loaded.grid.delta_seconds == 1800);
  CHECK(loaded.split.test_fraction == 0.25);
  CHECK(loaded.split.folds == 4);
  CHECK(loaded.split.rng_seed == 9);
  REQUIRE(loaded.train.zeta.has_value());
  CHECK(*loaded.train.zeta == 0.01);
  CHECK(loaded.train.zeta_grid == std::vector<double>{0.0, 0.5});
  CHECK(loaded.train.eta_init.v[2] == 2.5);
  CHECK(loaded.train.eta_max == 40.0);
  CHECK(loaded.train.max_iterations == 99);
  CHECK(loaded.train.neighbor_count == 12);
  CHECK(loaded.train.smoothing_window == 3);
  CHECK(loaded.train.epsilon == 1e-9);
  CHECK(loaded.train.forecaster.knn_neighbors == 7);
  CHECK(loaded.train.forecaster.knn_max_rows == 500);
  CHECK(loaded.train.store_max_rows == 600);
  REQUIRE(loaded.train.pinned[1].has_value());
  CHECK(*loaded.train.pinned[1] == 1.5);
  CHECK_FALSE(loaded.train.pinned[0].has_value());
  CHECK(loaded.output_dir == "results");

  // A second save of the loaded configuration is byte-identical.
  const fs::path again = dir / "again.json";
  save_config(loaded, again.string());
  CHECK(read_file(again) == read_file(path));
}

TEST_CASE("an unset regularization strength serializes as null") {
  const fs::path dir = scratch_dir("zeta");
  ExperimentConfig config;
  config.weather_models = {WeatherSource{"m1", "m1.csv"}};
  config.train.zeta.reset();
  const fs::path path = dir / "config.json";
  save_config(config, path.string());

  const nlohmann::json j = nlohmann::json::parse(read_file(path));
  CHECK(j.at("train").at("zeta").is_null());
  const ExperimentConfig loaded = load_config(path.string());
  CHECK_FALSE(loaded.train.zeta.has_value());
}

TEST_CASE("a minimal configuration file relies on defaults") {
  const fs::path dir = scratch_dir("minimal");
  const fs::path path = dir / "minimal.json";
  write_file(path, R"({"weather_models":[{"path":"data/m1.csv"}]})");
  const ExperimentConfig config = load_config(path.string());

  REQUIRE(config.weather_models.size() == 1);
  CHECK(config.weather_models[0].path == "data/m1.csv");
  // A missing label falls back to the path.
  CHECK(config.weather_models[0].label == "data/m1.csv");
  CHECK(config.power_models ==
        std::vector<ForecasterKind>{ForecasterKind::linear_regression,
                                    ForecasterKind::knn_regressor});
  CHECK(config.grid.k_min == 1);
  CHECK(config.grid.k_max == 24);
  CHECK(config.split.test_fraction == 0.2);
  CHECK(config.split.folds == 5);
  CHECK_FALSE(config.train.zeta.has_value());
  CHECK(config.train.zeta_grid ==
        std::vector<double>{0.0, 0.001, 0.01, 0.1, 1.0});
  CHECK(config.output_dir == "out");
}

TEST_CASE("invalid configuration files are rejected") {
  const fs::path dir = scratch_dir("badconfig");
  const fs::path path = dir / "bad.json";

  write_file(path, "{not json");
  CHECK_THROWS_AS(load_config(path.string()), std::invalid_argument);

  write_file(path, R"({"output_dir":"x"})");  // no weather models at all
  CHECK_THROWS_AS(load_config(path.string()), std::invalid_argument);

  write_file(path, R"({"weather_models":[]})");
  CHECK_THROWS_WITH_AS(load_config(path.string()),
                       doctest::Contains("at least one weather model"),
                       std::invalid_argument);

  write_file(path,
             R"({"weather_models":[{"path":"a"}],"power_models":["svm"]})");
  CHECK_THROWS_AS(load_config(path.string()), std::invalid_argument);

  write_file(path,
             R"({"weather_models":[{"path":"a"}],"train":{"pinned":[1,2]}})");
  CHECK_THROWS_WITH_AS(load_config(path.string()),
                       doctest::Contains("pinned"), std::invalid_argument);

  CHECK_THROWS_WITH_AS(load_config((dir / "absent.json").string()),
                       doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("atomic text writing creates parents and leaves no temp files") {
  const fs::path dir = scratch_dir("atomic");
  const fs::path nested = dir / "a" / "b" / "c.txt";
  write_text_atomic(nested.string(), "hello\n");
  CHECK(read_file(nested) == "hello\n");

  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& entry :
       fs::directory_iterator(nested.parent_path())) {
    ++entries;
  }
  CHECK(entries == 1);

  // Overwriting swaps content in place.
  write_text_atomic(nested.string(), "world\n");
  CHECK(read_file(nested) == "world\n");
}

TEST_CASE("forecast rows serialize with stable headers and blanks") {
  const fs::path dir = scratch_dir("forecasts");
  std::vector<ForecastRow> rows;
  rows.push_back(ForecastRow{kBase, 1, 0.5, 0.75});
  rows.push_back(ForecastRow{kBase, 2, 0.25, std::nullopt});
  const fs::path path = dir / "forecasts.csv";
  write_forecasts_csv(rows, path.string());
  CHECK(read_file(path) ==
        "origin_time,lead_time,prediction,observation\n"
        "2020-01-01T00:00:00Z,1,0.5,0.75\n"
        "2020-01-01T00:00:00Z,2,0.25,\n");
}

TEST_CASE("the weight trace lists every member of every prediction") {
  const fs::path dir = scratch_dir("trace");
  TracePrediction trace;
  trace.origin = kBase;
  trace.lead = 2;
  trace.prediction.value = 0.5;
  trace.prediction.uniform_fallback = false;
  MemberDiagnostics d;
  d.member = MemberId{1, 1};
  d.available = true;
  d.global_weather = 0.5;
  d.local_weather = 0.25;
  d.lead_weather = 1.0;
  d.global_power = 0.75;
  d.local_power = 0.5;
  d.lead_power = 1.0;
  d.raw_product = 0.5 * 0.25 * 0.75 * 0.5;
  d.weight = 1.0;
  d.value = 0.5;
  trace.prediction.members.push_back(d);
  d.member = MemberId{1, 2};
  d.available = false;
  d.weight = 0.0;
  d.value.reset();
  trace.prediction.members.push_back(d);

  const fs::path path = dir / "trace.csv";
  write_weight_trace({trace}, path.string());
  const std::string content = read_file(path);
  CHECK(content ==
        "origin_time,lead_time,weather_model,power_model,available,"
        "global_weather,local_weather,lead_weather,global_power,local_power,"
        "lead_power,raw_product,weight,member_value,ensemble_value,"
        "uniform_fallback\n"
        "2020-01-01T00:00:00Z,2,1,1,1,0.5,0.25,1,0.75,0.5,1,0.046875,1,0.5,"
        "0.5,0\n"
        "2020-01-01T00:00:00Z,2,1,2,0,0.5,0.25,1,0.75,0.5,1,0.046875,0,,"
        "0.5,0\n");
}

TEST_CASE("score tables render with their aggregate footer rows") {
  ScoreTable table;
  table.datasets = {"d1", "d2"};
  table.methods = {"a", "b"};
  table.rmse = {{0.25, 0.75}, {0.125, 0.375}};
  table.r2 = {{0.5, 0.25}, {0.75, 0.875}};

  const std::string text = render_score_table(table, "a");
  CHECK(text.substr(0, 20) == "metric,dataset,a,b\nr");
  CHECK(text.find("rmse,d1,0.25,0.125\n") != std::string::npos);
  CHECK(text.find("rmse,d2,0.75,0.375\n") != std::string::npos);
  CHECK(text.find("rmse,Avg.,0.5,0.25\n") != std::string::npos);
  CHECK(text.find("rmse,Std.,0.25,0.125\n") != std::string::npos);
  CHECK(text.find("rmse,Skill,0,0.5\n") != std::string::npos);
  CHECK(text.find("rmse,SkillMean,0,0.5\n") != std::string::npos);
  CHECK(text.find("rmse,#Wins,0,2\n") != std::string::npos);
  CHECK(text.find("r2,d1,0.5,0.75\n") != std::string::npos);
  CHECK(text.find("r2,Avg.,0.375,0.8125\n") != std::string::npos);
  CHECK(text.find("r2,#Wins,") != std::string::npos);

  const fs::path dir = scratch_dir("scores");
  const fs::path path = dir / "scores.csv";
  write_score_table(table, "a", path.string());
  CHECK(read_file(path) == text);

  CHECK_THROWS_AS(render_score_table(table, "missing"), std::invalid_argument);
}

TEST_CASE("the fit report renders as parseable JSON") {
  FitReport report;
  report.weather_models = 2;
  report.power_models = 2;
  report.train_origins = 80;
  report.test_origins = 20;
  report.chosen_eta.v = {2.5, 1.0, 1.0, 0.0, 1.0, 1.0};
  report.chosen_zeta = 0.01;
  report.chosen_mean_validation_rmse = 0.125;
  report.predict_calls_precompute = 42;
  report.predict_calls_optimize = 0;
  report.objective_evaluations = 1234;
  FitCandidate candidate;
  candidate.fold = 3;
  candidate.zeta = 0.01;
  candidate.eta = report.chosen_eta;
  candidate.own_fold_rmse = 0.25;
  candidate.mean_validation_rmse = 0.125;
  candidate.selected = true;
  report.candidates.push_back(candidate);
  report.notes.push_back("historic store thinned");

  const nlohmann::json j = nlohmann::json::parse(render_fit_report(report));
  CHECK(j.at("weather_models") == 2);
  CHECK(j.at("train_origins") == 80);
  CHECK(j.at("test_origins") == 20);
  REQUIRE(j.at("chosen_eta").is_array());
  CHECK(j.at("chosen_eta").size() == 6);
  CHECK(j.at("chosen_eta")[0] == 2.5);
  CHECK(j.at("chosen_zeta") == 0.01);
  CHECK(j.at("chosen_mean_validation_rmse") == 0.125);
  CHECK(j.at("predict_calls_precompute") == 42);
  CHECK(j.at("predict_calls_optimize") == 0);
  CHECK(j.at("objective_evaluations") == 1234);
  REQUIRE(j.at("candidates").size() == 1);
  CHECK(j.at("candidates")[0].at("fold") == 3);
  CHECK(j.at("candidates")[0].at("selected") == true);
  CHECK(j.at("candidates")[0].at("eta").size() == 6);
  REQUIRE(j.at("notes").size() == 1);
  CHECK(j.at("notes")[0] == "historic store thinned");
}
