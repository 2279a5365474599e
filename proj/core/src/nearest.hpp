#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace csge::detail {

/// Selects the `c` nearest rows to `query` under squared Euclidean distance,
/// writing their row indices into `indices` in ascending order.
///
/// Ties are broken toward the lowest row index: the kept set is the `c`
/// lexicographically smallest (distance, index) pairs, exactly as an
/// exhaustive scan with a stable ordering would produce. Each row's distance
/// is accumulated dimension-by-dimension in ascending order, so the computed
/// values are bit-identical to a straightforward brute-force implementation;
/// the only difference from one is speed.
///
/// `rows` is a row-major matrix of `n` rows by `dims` columns. `heap` is
/// caller-provided scratch so repeated calls do not allocate. Rows are
/// processed four at a time so the four independent accumulation chains can
/// overlap in the floating-point pipeline; a bounded max-heap of the kept
/// candidates turns almost every row into a single compare against the
/// current c-th best distance.
inline void select_nearest(const double* rows, std::size_t n, int dims,
                           const double* query, std::size_t c,
                           std::vector<std::pair<double, std::uint32_t>>& heap,
                           std::vector<std::uint32_t>& indices) {
  indices.clear();
  if (n == 0 || c == 0) return;
  if (c > n) c = n;

  heap.clear();
  if (heap.capacity() < c) heap.reserve(c);
  double threshold = std::numeric_limits<double>::infinity();

  const auto keep = [&](double dist, std::size_t idx) {
    if (heap.size() < c) {
      heap.emplace_back(dist, static_cast<std::uint32_t>(idx));
      std::push_heap(heap.begin(), heap.end());
      if (heap.size() == c) threshold = heap.front().first;
    } else {
      // Scanning in ascending row order means a newcomer that ties the
      // current c-th best distance has the larger index and must lose, so a
      // strict comparison implements the lexicographic rule.
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = {dist, static_cast<std::uint32_t>(idx)};
      std::push_heap(heap.begin(), heap.end());
      threshold = heap.front().first;
    }
  };

  const std::size_t stride = static_cast<std::size_t>(dims);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* r0 = rows + i * stride;
    const double* r1 = r0 + stride;
    const double* r2 = r1 + stride;
    const double* r3 = r2 + stride;
    double a0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double q = query[d];
      const double f0 = r0[d] - q;
      const double f1 = r1[d] - q;
      const double f2 = r2[d] - q;
      const double f3 = r3[d] - q;
      a0 += f0 * f0;
      a1 += f1 * f1;
      a2 += f2 * f2;
      a3 += f3 * f3;
    }
    if (a0 < threshold) keep(a0, i);
    if (a1 < threshold) keep(a1, i + 1);
    if (a2 < threshold) keep(a2, i + 2);
    if (a3 < threshold) keep(a3, i + 3);
  }
  for (; i < n; ++i) {
    const double* row = rows + i * stride;
    double acc = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double diff = row[d] - query[d];
      acc += diff * diff;
    }
    if (acc < threshold) keep(acc, i);
  }

  indices.reserve(heap.size());
  for (const auto& [dist, idx] : heap) indices.push_back(idx);
  std::sort(indices.begin(), indices.end());
}

}  // namespace csge::detail
