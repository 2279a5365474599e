// csge — command-line driver for the coopetitive soft-gating ensemble.
//
// Subcommands: synth-gen, train, predict, evaluate, ablate, trace. Every
// command validates its inputs before touching the output directory, writes
// files atomically, and is byte-reproducible for identical inputs and seeds.
// Failures exit nonzero with a single "error: <message>" line on stderr.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csge/ensemble.hpp"
#include "csge/io.hpp"
#include "csge/metrics.hpp"
#include "csge/synth.hpp"
#include "csge/training.hpp"

namespace {

using namespace csge;

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

// ---- Shared pipeline pieces -------------------------------------------

std::vector<std::string> source_paths(const ExperimentConfig& config) {
  std::vector<std::string> paths;
  paths.reserve(config.weather_models.size());
  for (const WeatherSource& source : config.weather_models) {
    paths.push_back(source.path);
  }
  return paths;
}

struct TrainedArtifacts {
  Bundle bundle;
  FitReport report;
  SplitResult split_result;
  DataSet data;  ///< normalized full dataset
};

TrainedArtifacts run_training(const ExperimentConfig& config) {
  TrainedArtifacts artifacts;
  DataSet raw = ingest(source_paths(config), config.grid);
  artifacts.split_result = split(raw, config.split);
  artifacts.bundle.normalization =
      fit_normalization(raw, artifacts.split_result.train);
  artifacts.data = apply_normalization(raw, artifacts.bundle.normalization);
  FitResult result =
      fit_csge(artifacts.data, config.power_models, config.train, config.split);
  artifacts.bundle.state = std::move(result.state);
  artifacts.bundle.forecasters = std::move(result.forecasters);
  artifacts.report = std::move(result.report);
  return artifacts;
}

DataSet load_for_bundle(const Bundle& bundle,
                        const std::vector<std::string>& data_paths) {
  if (static_cast<int>(data_paths.size()) != bundle.state.weather_models) {
    throw std::invalid_argument(
        "the bundle expects " + std::to_string(bundle.state.weather_models) +
        " data files, got " + std::to_string(data_paths.size()));
  }
  DataSet raw = ingest(data_paths, bundle.state.grid);
  return apply_normalization(raw, bundle.normalization);
}

std::vector<bool> parse_drops(const std::vector<std::string>& specs,
                              int weather_models, int power_models) {
  std::vector<bool> dropped(
      static_cast<std::size_t>(weather_models * power_models), false);
  for (const std::string& text : specs) {
    const std::size_t colon = text.find(':');
    int psi = 0;
    int phi = 0;
    bool ok = colon != std::string::npos && colon > 0 &&
              colon + 1 < text.size();
    if (ok) {
      try {
        std::size_t used = 0;
        psi = std::stoi(text.substr(0, colon), &used);
        ok = used == colon;
        std::size_t used2 = 0;
        phi = std::stoi(text.substr(colon + 1), &used2);
        ok = ok && used2 == text.size() - colon - 1;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || psi < 1 || psi > weather_models || phi < 1 ||
        phi > power_models) {
      throw std::invalid_argument(
          "--drop-member expects WEATHER:POWER with 1 <= WEATHER <= " +
          std::to_string(weather_models) + " and 1 <= POWER <= " +
          std::to_string(power_models) + ", got \"" + text + "\"");
    }
    dropped[static_cast<std::size_t>(
        flat_index(MemberId{psi, phi}, power_models) - 1)] = true;
  }
  return dropped;
}

std::vector<ForecastRow> predict_rows(const Bundle& bundle,
                                      const DataSet& data,
                                      const std::vector<bool>& dropped) {
  std::vector<ForecastRow> rows;
  for (const AlignedRow& row : align_all(data)) {
    Prediction p = predict_csge(bundle.state, bundle.forecasters, row, dropped);
    rows.push_back(ForecastRow{row.origin, row.lead, p.value, row.observation});
  }
  return rows;
}

// Per-lead scores for the bundle ensemble, the equal-weight ensemble, and
// each individual member; rows of the resulting table are leads.
ScoreTable evaluate_table(const Bundle& bundle, const DataSet& data) {
  const WeightState& state = bundle.state;
  const int psi_n = state.weather_models;
  const int phi_n = state.power_models;
  const int members = psi_n * phi_n;
  const int leads = state.grid.lead_count();

  ScoreTable table;
  table.methods.push_back("csge");
  table.methods.push_back("equal");
  for (int j = 1; j <= members; ++j) {
    const MemberId id = member_from_flat(j, phi_n);
    table.methods.push_back("m" + std::to_string(id.weather_model) + ":" +
                            std::to_string(id.power_model));
  }
  for (int k = state.grid.k_min; k <= state.grid.k_max; ++k) {
    table.datasets.push_back("k=" + std::to_string(k));
  }

  // forecast/observation pairs per (method, lead)
  const std::size_t method_count = table.methods.size();
  std::vector<std::vector<std::vector<double>>> fc(
      method_count, std::vector<std::vector<double>>(leads));
  std::vector<std::vector<std::vector<double>>> ob(
      method_count, std::vector<std::vector<double>>(leads));

  for (const AlignedRow& row : align_all(data)) {
    const int kidx = state.grid.index_of(row.lead);
    const std::vector<std::optional<double>> values =
        member_values(bundle.forecasters, psi_n, phi_n, row);
    bool any = false;
    double sum = 0.0;
    int n = 0;
    for (int j = 0; j < members; ++j) {
      if (values[j].has_value()) {
        any = true;
        sum += *values[j];
        ++n;
        fc[2 + j][kidx].push_back(*values[j]);
        ob[2 + j][kidx].push_back(row.observation);
      }
    }
    if (!any) continue;
    const Prediction p = predict_csge(bundle.state, bundle.forecasters, row);
    fc[0][kidx].push_back(p.value);
    ob[0][kidx].push_back(row.observation);
    fc[1][kidx].push_back(sum / n);
    ob[1][kidx].push_back(row.observation);
  }

  table.rmse.assign(method_count, std::vector<double>(leads, 0.0));
  table.r2.assign(method_count,
                  std::vector<std::optional<double>>(leads));
  for (std::size_t m = 0; m < method_count; ++m) {
    for (int k = 0; k < leads; ++k) {
      if (fc[m][k].empty()) {
        throw std::runtime_error("method " + table.methods[m] +
                                 " produced no forecasts at " +
                                 table.datasets[k]);
      }
      table.rmse[m][k] = rmse(fc[m][k], ob[m][k]);
      table.r2[m][k] = r_squared(fc[m][k], ob[m][k]);
    }
  }
  return table;
}

// ---- Commands ---------------------------------------------------------

struct SynthGenArgs {
  std::string scenario;
  std::string out = "out";
  std::optional<std::int64_t> seed;
  std::optional<int> origins;
};

int run_synth_gen(const SynthGenArgs& args) {
  ScenarioSpec spec = scenario_by_name(args.scenario);
  if (args.seed.has_value()) {
    spec.rng_seed = static_cast<std::uint64_t>(*args.seed);
  }
  if (args.origins.has_value()) {
    if (*args.origins < 1) {
      throw std::invalid_argument("--origins must be >= 1");
    }
    spec.n_origins = *args.origins;
  }
  const DataSet data = generate(spec);

  ExperimentConfig config;
  config.grid = spec.grid;
  config.output_dir = args.out;
  for (int psi = 1; psi <= data.weather_models; ++psi) {
    const std::string path =
        join_path(args.out, "model_" + std::to_string(psi) + ".csv");
    write_dataset_csv(data, psi, path);
    config.weather_models.push_back(
        WeatherSource{"model " + std::to_string(psi), path});
  }
  save_config(config, join_path(args.out, "config.json"));
  std::cout << "wrote " << data.weather_models << " weather model file(s) and "
            << "config.json to " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::int64_t> seed;
  // ablate only: aspects that stay enabled.
  std::optional<std::string> aspects;
};

void pin_disabled_aspects(TrainConfig& train, const std::string& aspects) {
  std::set<char> keep;
  std::string cleaned;
  for (char c : aspects) {
    if (c == ',' || c == ' ') continue;
    cleaned.push_back(c);
  }
  for (char c : cleaned) {
    if (c != 'g' && c != 'l' && c != 'k') {
      throw std::invalid_argument(
          "--aspects expects a comma-separated subset of g,l,k (global, "
          "local, lead-time), got \"" +
          aspects + "\"");
    }
    keep.insert(c);
  }
  const auto disable = [&](char aspect, int power_index, int weather_index) {
    if (keep.count(aspect) == 0) {
      train.pinned[power_index] = 0.0;
      train.pinned[weather_index] = 0.0;
    }
  };
  disable('g', EtaVector::kGlobalPower, EtaVector::kGlobalWeather);
  disable('l', EtaVector::kLocalPower, EtaVector::kLocalWeather);
  disable('k', EtaVector::kLeadPower, EtaVector::kLeadWeather);
}

int run_train(const TrainArgs& args) {
  ExperimentConfig config = load_config(args.config_path);
  if (args.out.has_value()) config.output_dir = *args.out;
  if (args.seed.has_value()) {
    config.split.rng_seed = static_cast<std::uint64_t>(*args.seed);
  }
  if (args.aspects.has_value()) {
    pin_disabled_aspects(config.train, *args.aspects);
    config.train.validate();
  }

  TrainedArtifacts artifacts = run_training(config);
  const std::string bundle_path = join_path(config.output_dir, "bundle.bin");
  save_bundle(artifacts.bundle, bundle_path);
  write_text_atomic(join_path(config.output_dir, "fit_report.json"),
                    render_fit_report(artifacts.report));

  // Forecasts over the chronological test tail.
  std::vector<ForecastRow> rows;
  const std::vector<std::int64_t>& test = artifacts.split_result.test;
  for (const AlignedRow& row : align_all(artifacts.data)) {
    if (!std::binary_search(test.begin(), test.end(), row.origin)) continue;
    const Prediction p =
        predict_csge(artifacts.bundle.state, artifacts.bundle.forecasters, row);
    rows.push_back(ForecastRow{row.origin, row.lead, p.value, row.observation});
  }
  write_forecasts_csv(rows, join_path(config.output_dir, "forecasts.csv"));

  std::cout << "trained " << artifacts.report.weather_models << "x"
            << artifacts.report.power_models << " members; bundle -> "
            << bundle_path << "\n";
  return 0;
}

struct PredictArgs {
  std::string bundle_path;
  std::vector<std::string> data_paths;
  std::string out = "out";
  std::vector<std::string> drop;
};

int run_predict(const PredictArgs& args) {
  const Bundle bundle = load_bundle(args.bundle_path);
  const DataSet data = load_for_bundle(bundle, args.data_paths);
  const std::vector<bool> dropped =
      parse_drops(args.drop, bundle.state.weather_models,
                  bundle.state.power_models);
  const std::vector<ForecastRow> rows = predict_rows(bundle, data, dropped);
  const std::string path = join_path(args.out, "forecasts.csv");
  write_forecasts_csv(rows, path);
  std::cout << "wrote " << rows.size() << " forecasts -> " << path << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string bundle_path;
  std::vector<std::string> data_paths;
  std::string baseline = "equal";
  std::string out = "out";
};

int run_evaluate(const EvaluateArgs& args) {
  const Bundle bundle = load_bundle(args.bundle_path);
  const DataSet data = load_for_bundle(bundle, args.data_paths);
  const ScoreTable table = evaluate_table(bundle, data);
  table.method_index(args.baseline);  // validate before writing
  const std::string path = join_path(args.out, "scores.csv");
  write_score_table(table, args.baseline, path);
  const int csge = table.method_index("csge");
  double mean = 0.0;
  for (double v : table.rmse[csge]) mean += v;
  mean /= static_cast<double>(table.rmse[csge].size());
  std::cout << "evaluated " << table.methods.size() << " methods over "
            << table.datasets.size() << " leads (csge avg rmse "
            << mean << ") -> " << path << "\n";
  return 0;
}

struct TraceArgs {
  std::string bundle_path;
  std::vector<std::string> data_paths;
  std::string origin_range;
  std::string out = "out";
};

int run_trace(const TraceArgs& args) {
  const Bundle bundle = load_bundle(args.bundle_path);
  const DataSet data = load_for_bundle(bundle, args.data_paths);

  std::size_t lo = 0;
  std::size_t hi = 0;
  {
    const std::size_t colon = args.origin_range.find(':');
    bool ok = colon != std::string::npos;
    if (ok) {
      try {
        lo = std::stoul(args.origin_range.substr(0, colon));
        hi = std::stoul(args.origin_range.substr(colon + 1));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    const std::vector<std::int64_t> origins = data.origins();
    if (!ok || lo > hi || hi >= origins.size()) {
      throw std::invalid_argument(
          "--origin-range expects FIRST:LAST as zero-based indices into the "
          "dataset's " +
          std::to_string(origins.size()) + " origins, got \"" +
          args.origin_range + "\"");
    }
  }

  const std::vector<std::int64_t> origins = data.origins();
  const std::set<std::int64_t> wanted(origins.begin() + lo,
                                      origins.begin() + hi + 1);
  std::vector<TracePrediction> traces;
  for (const AlignedRow& row : align_all(data)) {
    if (wanted.count(row.origin) == 0) continue;
    TracePrediction trace;
    trace.origin = row.origin;
    trace.lead = row.lead;
    trace.prediction = predict_csge(bundle.state, bundle.forecasters, row);
    traces.push_back(std::move(trace));
  }
  const std::string path = join_path(args.out, "trace.csv");
  write_weight_trace(traces, path);
  std::cout << "traced " << traces.size() << " predictions -> " << path
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "csge: coopetitive soft-gating ensemble for power forecasting.\n"
      "Combines weather-model x power-model member forecasts with weights\n"
      "gated on global, local (weather-situation), and lead-time skill."};
  app.require_subcommand(1);

  SynthGenArgs synth_args;
  CLI::App* synth = app.add_subcommand(
      "synth-gen", "Generate a named synthetic scenario: one CSV per weather "
                   "model plus a ready-to-train config.json");
  synth->add_option("--scenario", synth_args.scenario,
                    "Scenario name: pme-single, mme-day-ahead, "
                    "intraday-lagged, or model-count-sweep")
      ->required();
  synth->add_option("--out", synth_args.out,
                    "Output directory (default: out)");
  synth->add_option("--seed", synth_args.seed,
                    "Override the scenario's fixed RNG seed");
  synth->add_option("--origins", synth_args.origins,
                    "Override the scenario's number of forecast origins");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Ingest the configured data, fit the ensemble, and write "
               "bundle.bin, fit_report.json, and test-tail forecasts.csv");
  train->add_option("--config", train_args.config_path,
                    "Experiment config JSON")
      ->required();
  train->add_option("--out", train_args.out,
                    "Output directory (default: the config's output_dir)");
  train->add_option("--seed", train_args.seed,
                    "Override the training split's RNG seed");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand(
      "predict", "Forecast every row of the given data with a trained "
                 "bundle and write forecasts.csv");
  predict->add_option("--bundle", predict_args.bundle_path, "Trained bundle")
      ->required();
  predict
      ->add_option("--data", predict_args.data_paths,
                   "Input CSVs, one per weather model, in model order")
      ->required();
  predict->add_option("--out", predict_args.out,
                      "Output directory (default: out)");
  predict->add_option(
      "--drop-member", predict_args.drop,
      "Exclude member WEATHER:POWER (1-based, repeatable); the remaining "
      "weights renormalize");

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score the bundle ensemble, the equal-weight ensemble, and "
                  "every member per lead time and write scores.csv");
  evaluate->add_option("--bundle", eval_args.bundle_path, "Trained bundle")
      ->required();
  evaluate
      ->add_option("--data", eval_args.data_paths,
                   "Input CSVs, one per weather model, in model order")
      ->required();
  evaluate->add_option(
      "--baseline", eval_args.baseline,
      "Method the skill rows compare against (default: equal); one of csge, "
      "equal, or mWEATHER:POWER");
  evaluate->add_option("--out", eval_args.out,
                       "Output directory (default: out)");

  TrainArgs ablate_args;
  std::string ablate_aspects;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Train with only the kept weighting aspects enabled; the "
                "others' exponents are pinned to 0 (uniform)");
  ablate->add_option("--config", ablate_args.config_path,
                     "Experiment config JSON")
      ->required();
  ablate
      ->add_option("--aspects", ablate_aspects,
                   "Aspects to keep enabled, comma-separated subset of g "
                   "(global), l (local), k (lead-time)")
      ->required();
  ablate->add_option("--out", ablate_args.out,
                     "Output directory (default: the config's output_dir)");
  ablate->add_option("--seed", ablate_args.seed,
                     "Override the training split's RNG seed");

  TraceArgs trace_args;
  CLI::App* trace = app.add_subcommand(
      "trace", "Write per-member weight diagnostics for a range of origins "
               "to trace.csv");
  trace->add_option("--bundle", trace_args.bundle_path, "Trained bundle")
      ->required();
  trace
      ->add_option("--data", trace_args.data_paths,
                   "Input CSVs, one per weather model, in model order")
      ->required();
  trace
      ->add_option("--origin-range", trace_args.origin_range,
                   "FIRST:LAST zero-based origin indices (inclusive)")
      ->required();
  trace->add_option("--out", trace_args.out,
                    "Output directory (default: out)");

  try {
    app.parse(argc, argv);
    if (*synth) return run_synth_gen(synth_args);
    if (*train) return run_train(train_args);
    if (*predict) return run_predict(predict_args);
    if (*evaluate) return run_evaluate(eval_args);
    if (*ablate) {
      ablate_args.aspects = ablate_aspects;
      return run_train(ablate_args);
    }
    if (*trace) return run_trace(trace_args);
    throw std::logic_error("no subcommand dispatched");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
