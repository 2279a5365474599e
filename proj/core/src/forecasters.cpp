#include "csge/forecasters.hpp"

#include "nearest.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace csge {

namespace {

std::atomic<std::uint64_t> g_predict_calls{0};

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

void check_rows(const std::vector<LabeledRow>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("training set must not be empty");
  }
  const std::size_t dims = rows[0].features.size();
  for (const LabeledRow& row : rows) {
    if (row.features.size() != dims) {
      throw std::invalid_argument("training rows have inconsistent dimensions");
    }
  }
}

ForecasterState fit_linear(const std::vector<LabeledRow>& rows) {
  check_rows(rows);
  const int n = static_cast<int>(rows.size());
  const int dims = static_cast<int>(rows[0].features.size());
  if (n < dims + 1) {
    throw std::invalid_argument(
        "linear regression needs at least " + std::to_string(dims + 1) +
        " rows, got " + std::to_string(n));
  }

  Eigen::MatrixXd design(n, dims + 1);
  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (int d = 0; d < dims; ++d) design(i, d + 1) = rows[i].features[d];
    target(i) = rows[i].target;
  }

  ForecasterState state;
  state.kind = ForecasterKind::linear_regression;
  state.feature_dims = dims;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::VectorXd beta;
  if (qr.rank() < dims + 1) {
    // Collinear design: solve the ridge-regularized normal equations.
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += 1e-6;
    beta = gram.ldlt().solve(design.transpose() * target);
    state.ridge_fallback = true;
  } else {
    beta = qr.solve(target);
  }
  state.coefficients.assign(beta.data(), beta.data() + dims + 1);
  return state;
}

ForecasterState fit_knn(const std::vector<LabeledRow>& rows,
                        const FitOptions& options) {
  check_rows(rows);
  if (options.knn_neighbors < 1) {
    throw std::invalid_argument("neighbor count must be >= 1");
  }
  const int dims = static_cast<int>(rows[0].features.size());

  // Thin oversized training sets with a deterministic stride so fitting and
  // prediction stay affordable on large histories.
  std::vector<const LabeledRow*> kept;
  kept.reserve(rows.size());
  if (options.knn_max_rows > 0 &&
      static_cast<int>(rows.size()) > options.knn_max_rows) {
    const std::size_t n = rows.size();
    const std::size_t target_rows = static_cast<std::size_t>(options.knn_max_rows);
    for (std::size_t i = 0; i < target_rows; ++i) {
      kept.push_back(&rows[i * n / target_rows]);
    }
  } else {
    for (const LabeledRow& row : rows) kept.push_back(&row);
  }

  const std::size_t n = kept.size();
  ForecasterState state;
  state.kind = ForecasterKind::knn_regressor;
  state.feature_dims = dims;
  state.neighbor_count = options.knn_neighbors;
  state.feature_mean.assign(dims, 0.0);
  state.feature_scale.assign(dims, 1.0);

  for (const LabeledRow* row : kept) {
    for (int d = 0; d < dims; ++d) state.feature_mean[d] += row->features[d];
  }
  for (int d = 0; d < dims; ++d) state.feature_mean[d] /= static_cast<double>(n);
  std::vector<double> var(dims, 0.0);
  for (const LabeledRow* row : kept) {
    for (int d = 0; d < dims; ++d) {
      const double c = row->features[d] - state.feature_mean[d];
      var[d] += c * c;
    }
  }
  for (int d = 0; d < dims; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(n));
    state.feature_scale[d] = sd > 0.0 ? sd : 1.0;
  }

  state.train_features.resize(n * static_cast<std::size_t>(dims));
  state.train_targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < dims; ++d) {
      state.train_features[i * dims + d] =
          (kept[i]->features[d] - state.feature_mean[d]) /
          state.feature_scale[d];
    }
    state.train_targets[i] = kept[i]->target;
  }
  return state;
}

double predict_knn(const ForecasterState& state,
                   const std::vector<double>& features) {
  const int dims = state.feature_dims;
  const std::size_t n = state.train_targets.size();
  thread_local std::vector<double> query;
  query.resize(dims);
  for (int d = 0; d < dims; ++d) {
    query[d] = (features[d] - state.feature_mean[d]) / state.feature_scale[d];
  }

  const std::size_t c =
      std::min(static_cast<std::size_t>(state.neighbor_count), n);
  thread_local std::vector<std::pair<double, std::uint32_t>> heap;
  thread_local std::vector<std::uint32_t> selected;
  detail::select_nearest(state.train_features.data(), n, dims, query.data(),
                         c, heap, selected);
  // Accumulate in row order for a canonical floating-point sum.
  double acc = 0.0;
  for (std::uint32_t row : selected) acc += state.train_targets[row];
  return acc / static_cast<double>(c);
}

}  // namespace

ForecasterKind forecaster_kind_from_string(std::string_view name) {
  if (name == "persistence") return ForecasterKind::persistence;
  if (name == "linear_regression") return ForecasterKind::linear_regression;
  if (name == "knn_regressor") return ForecasterKind::knn_regressor;
  throw std::invalid_argument("unknown forecaster kind: " + std::string(name));
}

std::string to_string(ForecasterKind kind) {
  switch (kind) {
    case ForecasterKind::persistence:
      return "persistence";
    case ForecasterKind::linear_regression:
      return "linear_regression";
    case ForecasterKind::knn_regressor:
      return "knn_regressor";
  }
  throw std::invalid_argument("unknown forecaster kind");
}

ForecasterState fit(ForecasterKind kind, const std::vector<LabeledRow>& rows,
                    const FitOptions& options) {
  switch (kind) {
    case ForecasterKind::persistence: {
      ForecasterState state;
      state.kind = ForecasterKind::persistence;
      state.feature_dims = rows.empty() ? 0 : static_cast<int>(rows[0].features.size());
      return state;
    }
    case ForecasterKind::linear_regression:
      return fit_linear(rows);
    case ForecasterKind::knn_regressor:
      return fit_knn(rows, options);
  }
  throw std::invalid_argument("unknown forecaster kind");
}

std::optional<double> predict(const ForecasterState& state,
                              const ForecastRecord& record) {
  g_predict_calls.fetch_add(1, std::memory_order_relaxed);
  switch (state.kind) {
    case ForecasterKind::persistence:
      if (!record.recent_power_at_origin) return std::nullopt;
      return clip01(*record.recent_power_at_origin);
    case ForecasterKind::linear_regression: {
      if (static_cast<int>(record.features.size()) != state.feature_dims) {
        throw std::invalid_argument("feature length does not match fitted model");
      }
      double value = state.coefficients[0];
      for (int d = 0; d < state.feature_dims; ++d) {
        value += state.coefficients[d + 1] * record.features[d];
      }
      return clip01(value);
    }
    case ForecasterKind::knn_regressor: {
      if (static_cast<int>(record.features.size()) != state.feature_dims) {
        throw std::invalid_argument("feature length does not match fitted model");
      }
      return clip01(predict_knn(state, record.features));
    }
  }
  throw std::invalid_argument("unknown forecaster kind");
}

std::uint64_t predict_call_count() {
  return g_predict_calls.load(std::memory_order_relaxed);
}

void reset_predict_call_count() {
  g_predict_calls.store(0, std::memory_order_relaxed);
}

}  // namespace csge
