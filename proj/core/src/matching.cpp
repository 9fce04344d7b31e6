#include "cva/matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cva {

std::vector<long> MatchResult::query_to_gt(std::size_t queries) const {
  std::vector<long> out(queries, -1);
  for (std::size_t g = 0; g < assignment.size(); ++g) out.at(assignment[g]) = static_cast<long>(g);
  return out;
}

MatchResult hungarian_match(const CostMatrix& cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n > m) {
    throw std::invalid_argument("hungarian_match: " + std::to_string(n) +
                                " ground truths exceed " + std::to_string(m) + " queries");
  }
  if (cost.values.size() != n * m) throw std::invalid_argument("hungarian_match: malformed matrix");
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_match: non-finite cost");
  }
  MatchResult result;
  if (n == 0) return result;

  // 1-based potentials; column 0 is a virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  result.assignment.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) result.assignment[owner[j] - 1] = j - 1;
  }
  for (std::size_t g = 0; g < n; ++g) result.cost += cost.at(g, result.assignment[g]);
  return result;
}

}  // namespace cva
