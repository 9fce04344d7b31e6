#pragma once

#include <cstddef>
#include <vector>

namespace cva {

/// Row-major cost matrix with rows = ground truths, cols = queries.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

struct MatchResult {
  /// assignment[g] is the query matched to ground truth g; injective.
  std::vector<std::size_t> assignment;
  double cost = 0.0;

  /// Inverse view: for each of `queries` slots, the matched ground truth or -1.
  std::vector<long> query_to_gt(std::size_t queries) const;
};

/// Exact minimum-cost injective assignment of rows to columns (rows <= cols),
/// shortest augmenting path with potentials, O(rows^2 * cols).
/// Throws std::invalid_argument if rows > cols or a cost is not finite.
MatchResult hungarian_match(const CostMatrix& cost);

}  // namespace cva
