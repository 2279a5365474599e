#include "csge/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "csge/ensemble.hpp"

namespace csge {

namespace {

constexpr std::array<int, EtaVector::kSize> kStageOrder = {
    EtaVector::kGlobalWeather, EtaVector::kGlobalPower,
    EtaVector::kLocalWeather,  EtaVector::kLocalPower,
    EtaVector::kLeadWeather,   EtaVector::kLeadPower};

bool contains_origin(const std::vector<std::int64_t>& sorted,
                     std::int64_t origin) {
  return std::binary_search(sorted.begin(), sorted.end(), origin);
}

std::vector<const AlignedRow*> rows_for(
    const std::vector<AlignedRow>& rows,
    const std::vector<std::int64_t>& origins) {
  std::vector<const AlignedRow*> subset;
  for (const AlignedRow& row : rows) {
    if (contains_origin(origins, row.origin)) subset.push_back(&row);
  }
  return subset;
}

/// Deterministic stride thinning to at most cap items; cap <= 0 disables.
template <typename T>
std::vector<T> thin_to(const std::vector<T>& items, int cap) {
  if (cap <= 0 || static_cast<int>(items.size()) <= cap) return items;
  std::vector<T> kept;
  kept.reserve(cap);
  const std::size_t n = items.size();
  for (int i = 0; i < cap; ++i) {
    kept.push_back(items[static_cast<std::size_t>(i) * n / cap]);
  }
  return kept;
}

std::vector<ForecasterState> fit_members(
    int weather_models, const std::vector<ForecasterKind>& kinds,
    const std::vector<const AlignedRow*>& rows, const TrainConfig& config) {
  const int power_models = static_cast<int>(kinds.size());
  std::vector<ForecasterState> states(
      static_cast<std::size_t>(weather_models) * power_models);
  for (int psi = 0; psi < weather_models; ++psi) {
    std::vector<LabeledRow> labeled;
    for (const AlignedRow* row : rows) {
      if (row->features[psi] != nullptr) {
        labeled.push_back(LabeledRow{*row->features[psi], row->observation});
      }
    }
    for (int phi = 0; phi < power_models; ++phi) {
      states[static_cast<std::size_t>(psi) * power_models + phi] =
          fit(kinds[phi], labeled, config.forecaster);
    }
  }
  return states;
}

/// One out-of-sample member error with its position, so out-of-fold lists
/// can be ordered canonically before statistics are formed.
struct MemberError {
  std::int64_t origin;
  int lead;
  double error;
};

struct StoreRow {
  std::int64_t origin;
  int lead;
  const std::vector<double>* features;
  std::vector<double> abs_errors;  ///< per power model
};

bool store_row_before(const StoreRow& a, const StoreRow& b) {
  return a.origin != b.origin ? a.origin < b.origin : a.lead < b.lead;
}

std::vector<HistoricStore> build_stores(
    std::vector<std::vector<StoreRow>>& per_weather, const TrainConfig& config,
    int power_models) {
  std::vector<HistoricStore> stores;
  stores.reserve(per_weather.size());
  for (std::size_t psi = 0; psi < per_weather.size(); ++psi) {
    const std::vector<StoreRow> rows =
        thin_to(per_weather[psi], config.store_max_rows);
    if (rows.empty()) {
      throw std::invalid_argument(
          "weather model " + std::to_string(psi + 1) +
          " has no rows with a complete member set to build a historic store");
    }
    std::vector<const std::vector<double>*> features;
    features.reserve(rows.size());
    std::vector<std::vector<double>> errors(
        power_models, std::vector<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      features.push_back(rows[i].features);
      for (int phi = 0; phi < power_models; ++phi) {
        errors[phi][i] = rows[i].abs_errors[phi];
      }
    }
    std::vector<double> mean;
    std::vector<double> scale;
    standardization_stats(features, mean, scale);
    stores.push_back(make_historic_store(features, errors, std::move(mean),
                                         std::move(scale),
                                         config.neighbor_count));
  }
  return stores;
}

/// Everything fit_csge derives from one fold before any exponent search.
struct FoldData {
  std::vector<ForecasterState> forecasters;
  std::vector<HistoricStore> stores;
  ObjectiveContext context;             ///< holds the optimization rows
  std::vector<ObjectiveRow> val_rows;   ///< candidate-scoring rows
};

/// Member forecasts plus (when needed) local quality for a set of aligned
/// rows, precomputed once.
std::vector<ObjectiveRow> precompute_rows(
    const std::vector<const AlignedRow*>& rows,
    const std::vector<ForecasterState>& forecasters,
    const std::vector<HistoricStore>& stores, int weather_models,
    int power_models, bool local_needed) {
  std::vector<ObjectiveRow> out;
  out.reserve(rows.size());
  for (const AlignedRow* row : rows) {
    ObjectiveRow orow;
    orow.lead = row->lead;
    orow.observation = row->observation;
    orow.values = member_values(forecasters, weather_models, power_models, *row);
    if (local_needed) {
      orow.local_q.assign(weather_models, {});
      for (int psi = 0; psi < weather_models; ++psi) {
        bool any = false;
        for (int phi = 0; phi < power_models; ++phi) {
          if (orow.values[psi * power_models + phi].has_value()) any = true;
        }
        if (!any) continue;
        orow.local_q[psi] =
            stores[psi].local_quality(*row->features[psi]).q;
      }
    }
    out.push_back(std::move(orow));
  }
  return out;
}

/// Root mean squared ensemble error of the rows under the given tables.
double rows_rmse(const WeightState& tables,
                 const std::vector<ObjectiveRow>& rows) {
  thread_local EnsembleScratch scratch;
  thread_local std::vector<const std::vector<double>*> qptr;
  double acc = 0.0;
  for (const ObjectiveRow& row : rows) {
    qptr.assign(tables.weather_models, nullptr);
    if (!row.local_q.empty()) {
      for (int psi = 0; psi < tables.weather_models; ++psi) {
        if (!row.local_q[psi].empty()) qptr[psi] = &row.local_q[psi];
      }
    }
    const double value =
        assemble_prediction(tables, row.lead, qptr, row.values, scratch);
    const double e = row.observation - value;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(rows.size()));
}

}  // namespace

void TrainConfig::validate() const {
  if (zeta.has_value() && !(*zeta >= 0.0)) {
    throw std::invalid_argument("zeta must be >= 0");
  }
  if (!zeta.has_value()) {
    if (zeta_grid.empty()) {
      throw std::invalid_argument(
          "zeta grid must not be empty when zeta is unset");
    }
    for (double z : zeta_grid) {
      if (!(z >= 0.0)) {
        throw std::invalid_argument("zeta grid values must be >= 0");
      }
    }
  }
  eta_init.validate();
  if (!(eta_max > 0.0)) {
    throw std::invalid_argument("eta_max must be > 0");
  }
  if (!(fn_tol > 0.0) || !(param_tol > 0.0)) {
    throw std::invalid_argument("search tolerances must be > 0");
  }
  if (max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (neighbor_count < 1) {
    throw std::invalid_argument("neighbor count must be >= 1");
  }
  if (smoothing_window < 1 || smoothing_window % 2 == 0) {
    throw std::invalid_argument(
        "smoothing window must be a positive odd integer");
  }
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("epsilon must be >= 0");
  }
  if (forecaster.knn_neighbors < 1) {
    throw std::invalid_argument("knn_neighbors must be >= 1");
  }
  for (const std::optional<double>& pin : pinned) {
    if (pin.has_value() && (!(*pin >= 0.0) || !(*pin <= eta_max))) {
      throw std::invalid_argument(
          "pinned exponents must lie in [0, eta_max]");
    }
  }
}

SplitResult split(const DataSet& data, const SplitPlan& plan) {
  if (!(plan.test_fraction > 0.0 && plan.test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  }
  if (plan.folds < 3) {
    throw std::invalid_argument(
        "need at least 3 folds so every fold has a parameter block");
  }
  const std::vector<std::int64_t> origins = data.origins();
  const int total = static_cast<int>(origins.size());
  // Tiny slack keeps e.g. 0.2 * 100 from rounding up to 21 test origins.
  const int test_count = static_cast<int>(
      std::ceil(plan.test_fraction * static_cast<double>(total) - 1e-9));
  const int train_count = total - test_count;
  if (train_count < plan.folds) {
    throw std::invalid_argument(
        "too few origins to split: " + std::to_string(total) + " total, " +
        std::to_string(train_count) + " for training, but " +
        std::to_string(plan.folds) + " folds each need at least one origin");
  }

  SplitResult result;
  result.train.assign(origins.begin(), origins.begin() + train_count);
  result.test.assign(origins.begin() + train_count, origins.end());

  // Explicit Fisher-Yates so the split does not depend on the standard
  // library's shuffle implementation.
  std::vector<std::int64_t> shuffled = result.train;
  std::mt19937_64 rng(plan.rng_seed);
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(shuffled[i], shuffled[j]);
  }

  const int folds = plan.folds;
  const std::size_t n = shuffled.size();
  auto block_begin = [&](int block) {
    return static_cast<std::size_t>(block) * n / folds;
  };
  result.folds.resize(folds);
  for (int fold = 0; fold < folds; ++fold) {
    FoldRoles& roles = result.folds[fold];
    for (int block = 0; block < folds; ++block) {
      const auto first = shuffled.begin() + block_begin(block);
      const auto last = shuffled.begin() + block_begin(block + 1);
      std::vector<std::int64_t>* role = &roles.parameter;
      if (block == fold) {
        role = &roles.validation;
      } else if (block == (fold + 1) % folds) {
        role = &roles.optimization;
      }
      role->insert(role->end(), first, last);
    }
    std::sort(roles.parameter.begin(), roles.parameter.end());
    std::sort(roles.optimization.begin(), roles.optimization.end());
    std::sort(roles.validation.begin(), roles.validation.end());
  }
  return result;
}

double objective(const ObjectiveContext& context, const EtaVector& eta) {
  if (context.rows.empty()) {
    throw std::invalid_argument("objective needs at least one row");
  }
  const WeightState tables =
      make_weight_tables(context.grid, context.overall_rmse, context.profile,
                         eta, context.smoothing_window, context.epsilon);
  thread_local EnsembleScratch scratch;
  thread_local std::vector<const std::vector<double>*> qptr;

  const std::size_t psi_n = static_cast<std::size_t>(context.weather_models);
  const std::size_t count = psi_n * context.power_models;
  const std::size_t n = context.rows.size();

  if (context.cached_eta_local_power != eta.local_power() ||
      context.cached_eta_local_weather != eta.local_weather() ||
      context.cached_local_weather.size() != n * psi_n) {
    context.cached_local_weather.resize(n * psi_n);
    context.cached_local_power.resize(n * count);
    for (std::size_t i = 0; i < n; ++i) {
      const ObjectiveRow& row = context.rows[i];
      qptr.assign(psi_n, nullptr);
      if (!row.local_q.empty()) {
        for (std::size_t psi = 0; psi < psi_n; ++psi) {
          if (!row.local_q[psi].empty()) qptr[psi] = &row.local_q[psi];
        }
      }
      local_gate_factors(tables, qptr, row.values, scratch);
      std::copy(scratch.local_weather.begin(), scratch.local_weather.end(),
                context.cached_local_weather.begin() + i * psi_n);
      std::copy(scratch.local_power.begin(), scratch.local_power.end(),
                context.cached_local_power.begin() + i * count);
    }
    context.cached_eta_local_power = eta.local_power();
    context.cached_eta_local_weather = eta.local_weather();
  }

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ObjectiveRow& row = context.rows[i];
    const double value = assemble_from_factors(
        tables, row.lead, row.values,
        std::span<const double>(&context.cached_local_weather[i * psi_n],
                                psi_n),
        std::span<const double>(&context.cached_local_power[i * count], count),
        scratch);
    const double e = row.observation - value;
    acc += e * e;
  }
  return acc / static_cast<double>(n) + context.zeta * eta.sum();
}

EtaVector optimize_eta(const TrainConfig& config,
                       const std::function<double(const EtaVector&)>& fn) {
  config.validate();
  EtaVector eta = config.eta_init;
  for (int s = 0; s < EtaVector::kSize; ++s) {
    if (config.pinned[s].has_value()) eta.v[s] = *config.pinned[s];
    eta.v[s] = std::clamp(eta.v[s], 0.0, config.eta_max);
  }
  double incumbent = fn(eta);
  if (!std::isfinite(incumbent)) {
    throw std::invalid_argument(
        "objective is not finite at the initial exponents");
  }

  for (int s : kStageOrder) {
    if (config.pinned[s].has_value()) continue;

    // Candidates live on [0, eta_max]: negatives reflect, the top clamps.
    const auto fold_coord = [&](double x) {
      if (x < 0.0) x = -x;
      return std::min(x, config.eta_max);
    };
    const auto eval = [&](double x) {
      EtaVector probe = eta;
      probe.v[s] = x;
      return fn(probe);
    };

    // One-coordinate Nelder-Mead: the simplex is the pair (a, b) with
    // f(a) <= f(b).
    double a = eta.v[s];
    double fa = incumbent;
    double b = a + 0.5;
    if (b > config.eta_max) b = std::max(0.0, a - 0.5);
    if (b == a) b = a == 0.0 ? config.eta_max : 0.0;
    double fb = eval(b);
    if (fb < fa) {
      std::swap(a, b);
      std::swap(fa, fb);
    }

    for (int iter = 0; iter < config.max_iterations; ++iter) {
      if (std::abs(fa - fb) < config.fn_tol &&
          std::abs(a - b) < config.param_tol) {
        break;
      }
      const double reflected = fold_coord(a + (a - b));
      const double fr = eval(reflected);
      if (fr < fa) {
        const double expanded = fold_coord(a + 2.0 * (a - b));
        const double fe = expanded == reflected ? fr : eval(expanded);
        b = a;
        fb = fa;
        if (fe < fr) {
          a = expanded;
          fa = fe;
        } else {
          a = reflected;
          fa = fr;
        }
      } else {
        // Contract toward the better endpoint. The bracket halves whether
        // or not the midpoint improves, so the stage always terminates.
        const double mid = 0.5 * (a + b);
        b = mid;
        fb = eval(mid);
        if (fb < fa) {
          std::swap(a, b);
          std::swap(fa, fb);
        }
      }
    }

    // Prefer the exact boundary when it is indistinguishable from the
    // stage optimum; an exponent of 0 keeps that aspect uniform.
    if (a != 0.0) {
      const double f0 = eval(0.0);
      if (f0 <= fa + config.fn_tol) {
        a = 0.0;
        fa = f0;
      }
    }
    if (fa < incumbent) {
      eta.v[s] = a;
      incumbent = fa;
    }
  }
  return eta;
}

FitResult fit_csge(const DataSet& data,
                   const std::vector<ForecasterKind>& power_models,
                   const TrainConfig& config, const SplitPlan& plan) {
  config.validate();
  if (config.joint_refine) {
    throw std::invalid_argument(
        "joint_refine is reserved and not implemented");
  }
  if (power_models.empty()) {
    throw std::invalid_argument("need at least one power model kind");
  }
  const int psi_n = data.weather_models;
  const int phi_n = static_cast<int>(power_models.size());
  const int members = psi_n * phi_n;

  const SplitResult sp = split(data, plan);
  const std::vector<AlignedRow> all_rows = align_all(data);

  // With both local exponents pinned to zero the locality factors are
  // uniform, so store queries are skipped throughout.
  const auto& pin_lp = config.pinned[EtaVector::kLocalPower];
  const auto& pin_lw = config.pinned[EtaVector::kLocalWeather];
  const bool local_needed = !(pin_lp.has_value() && *pin_lp == 0.0 &&
                              pin_lw.has_value() && *pin_lw == 0.0);

  FitReport report;
  report.weather_models = psi_n;
  report.power_models = phi_n;
  report.train_origins = static_cast<int>(sp.train.size());
  report.test_origins = static_cast<int>(sp.test.size());

  const std::uint64_t calls_start = predict_call_count();

  // ---- Per-fold artifacts --------------------------------------------
  std::vector<FoldData> folds;
  folds.reserve(sp.folds.size());
  std::vector<std::vector<MemberError>> oof_errors(members);
  std::vector<std::vector<StoreRow>> oof_store_rows(psi_n);

  for (std::size_t f = 0; f < sp.folds.size(); ++f) {
    const FoldRoles& roles = sp.folds[f];
    FoldData fold;
    fold.forecasters = fit_members(psi_n, power_models,
                                   rows_for(all_rows, roles.parameter), config);

    // Out-of-sample member predictions on the validation origins feed the
    // fold's error statistics and historic stores.
    const std::vector<const AlignedRow*> val_aligned =
        rows_for(all_rows, roles.validation);
    std::vector<std::vector<LeadError>> fold_errors(members);
    std::vector<std::vector<StoreRow>> fold_store_rows(psi_n);
    std::size_t incomplete_rows = 0;
    std::vector<ObjectiveRow> val_rows;
    val_rows.reserve(val_aligned.size());
    for (const AlignedRow* row : val_aligned) {
      ObjectiveRow orow;
      orow.lead = row->lead;
      orow.observation = row->observation;
      orow.values =
          member_values(fold.forecasters, psi_n, phi_n, *row);
      for (int j = 0; j < members; ++j) {
        if (!orow.values[j].has_value()) continue;
        const double error = *orow.values[j] - row->observation;
        fold_errors[j].push_back(LeadError{row->lead, error});
        oof_errors[j].push_back(MemberError{row->origin, row->lead, error});
      }
      bool any_incomplete = false;
      for (int psi = 0; psi < psi_n; ++psi) {
        if (row->features[psi] == nullptr) continue;
        StoreRow srow;
        srow.origin = row->origin;
        srow.lead = row->lead;
        srow.features = row->features[psi];
        srow.abs_errors.resize(phi_n);
        bool complete = true;
        for (int phi = 0; phi < phi_n; ++phi) {
          const auto& value = orow.values[psi * phi_n + phi];
          if (!value.has_value()) {
            complete = false;
            break;
          }
          srow.abs_errors[phi] = std::abs(*value - row->observation);
        }
        if (!complete) {
          any_incomplete = true;
          continue;
        }
        fold_store_rows[psi].push_back(srow);
        oof_store_rows[psi].push_back(std::move(srow));
      }
      if (any_incomplete) ++incomplete_rows;
      val_rows.push_back(std::move(orow));
    }
    if (incomplete_rows > 0) {
      report.notes.push_back(
          "fold " + std::to_string(f + 1) + ": " +
          std::to_string(incomplete_rows) +
          " validation rows lacked a complete member set and were excluded "
          "from the historic stores");
    }

    const ErrorLedger ledger =
        make_error_ledger(data.grid, psi_n, phi_n, fold_errors);
    fold.stores = build_stores(fold_store_rows, config, phi_n);

    // Local quality on the validation rows is queried against stores built
    // from those same rows (self-inclusive neighborhoods); it only ranks
    // exponent candidates, all of which share the bias.
    if (local_needed) {
      for (std::size_t i = 0; i < val_rows.size(); ++i) {
        ObjectiveRow& orow = val_rows[i];
        const AlignedRow* row = val_aligned[i];
        orow.local_q.assign(psi_n, {});
        for (int psi = 0; psi < psi_n; ++psi) {
          bool any = false;
          for (int phi = 0; phi < phi_n; ++phi) {
            if (orow.values[psi * phi_n + phi].has_value()) any = true;
          }
          if (!any) continue;
          orow.local_q[psi] =
              fold.stores[psi].local_quality(*row->features[psi]).q;
        }
      }
    }
    fold.val_rows = std::move(val_rows);

    fold.context.grid = data.grid;
    fold.context.weather_models = psi_n;
    fold.context.power_models = phi_n;
    fold.context.epsilon = config.epsilon;
    fold.context.smoothing_window = config.smoothing_window;
    fold.context.overall_rmse = ledger.overall;
    fold.context.profile = leadtime_profile(ledger, config.smoothing_window);
    fold.context.rows = precompute_rows(rows_for(all_rows, roles.optimization),
                                        fold.forecasters, fold.stores, psi_n,
                                        phi_n, local_needed);
    folds.push_back(std::move(fold));
  }

  const std::uint64_t calls_precomputed = predict_call_count();

  // ---- Exponent search ------------------------------------------------
  bool any_free = false;
  for (int s = 0; s < EtaVector::kSize; ++s) {
    if (!config.pinned[s].has_value()) any_free = true;
  }
  std::vector<double> zetas;
  if (config.zeta.has_value()) {
    zetas.push_back(*config.zeta);
  } else if (!any_free) {
    zetas.push_back(0.0);  // nothing to regularize
  } else {
    zetas = config.zeta_grid;
  }

  for (double zeta : zetas) {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      folds[f].context.zeta = zeta;
      const EtaVector eta = optimize_eta(config, [&](const EtaVector& probe) {
        ++report.objective_evaluations;
        return objective(folds[f].context, probe);
      });
      FitCandidate candidate;
      candidate.fold = static_cast<int>(f);
      candidate.zeta = zeta;
      candidate.eta = eta;
      report.candidates.push_back(candidate);
    }
  }

  // Every candidate is scored by its mean validation RMSE across folds.
  std::size_t best = 0;
  for (std::size_t c = 0; c < report.candidates.size(); ++c) {
    FitCandidate& candidate = report.candidates[c];
    double total = 0.0;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      const WeightState tables = make_weight_tables(
          data.grid, folds[g].context.overall_rmse, folds[g].context.profile,
          candidate.eta, config.smoothing_window, config.epsilon);
      const double fold_rmse = rows_rmse(tables, folds[g].val_rows);
      total += fold_rmse;
      if (static_cast<int>(g) == candidate.fold) {
        candidate.own_fold_rmse = fold_rmse;
      }
    }
    candidate.mean_validation_rmse = total / static_cast<double>(folds.size());
    if (candidate.mean_validation_rmse <
        report.candidates[best].mean_validation_rmse) {
      best = c;
    }
  }
  report.candidates[best].selected = true;
  report.chosen_eta = report.candidates[best].eta;
  report.chosen_zeta = report.candidates[best].zeta;
  report.chosen_mean_validation_rmse =
      report.candidates[best].mean_validation_rmse;
  report.predict_calls_precompute = calls_precomputed - calls_start;
  report.predict_calls_optimize = predict_call_count() - calls_precomputed;

  // ---- Final state ----------------------------------------------------
  // Error statistics and stores come from the out-of-fold validation
  // predictions (every training origin exactly once), ordered canonically
  // so the result does not depend on fold processing order. The deployed
  // base forecasters are refitted on the complete training window, so they
  // are typically slightly stronger than the fold models that produced the
  // error statistics.
  std::vector<std::vector<LeadError>> oof_lead_errors(members);
  for (int j = 0; j < members; ++j) {
    std::sort(oof_errors[j].begin(), oof_errors[j].end(),
              [](const MemberError& a, const MemberError& b) {
                return a.origin != b.origin ? a.origin < b.origin
                                            : a.lead < b.lead;
              });
    oof_lead_errors[j].reserve(oof_errors[j].size());
    for (const MemberError& e : oof_errors[j]) {
      oof_lead_errors[j].push_back(LeadError{e.lead, e.error});
    }
  }
  const ErrorLedger oof_ledger =
      make_error_ledger(data.grid, psi_n, phi_n, oof_lead_errors);
  for (std::vector<StoreRow>& rows : oof_store_rows) {
    std::sort(rows.begin(), rows.end(), store_row_before);
  }
  std::vector<HistoricStore> oof_stores =
      build_stores(oof_store_rows, config, phi_n);

  FitResult result;
  result.state =
      make_weight_state(oof_ledger, std::move(oof_stores), report.chosen_eta,
                        config.smoothing_window, config.epsilon);
  result.forecasters =
      fit_members(psi_n, power_models, rows_for(all_rows, sp.train), config);
  result.report = std::move(report);
  return result;
}

}  // namespace csge
