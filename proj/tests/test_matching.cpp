#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "cva/matching.hpp"
#include "support/oracles.hpp"

namespace cva {
namespace {

using test::assignment_cost;
using test::brute_force_assignment;

TEST(Hungarian, Trivial) {
  CostMatrix one(1, 1, 5.0);
  const auto m = hungarian_match(one);
  EXPECT_EQ(m.assignment, (std::vector<std::size_t>{0}));
  EXPECT_EQ(m.cost, 5.0);
  CostMatrix two(2, 2);
  two.values = {0, 9, 9, 0};
  const auto m2 = hungarian_match(two);
  EXPECT_EQ(m2.assignment, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m2.cost, 0.0);
}

TEST(Hungarian, Errors) {
  EXPECT_THROW(hungarian_match(CostMatrix(3, 2)), std::invalid_argument);
  CostMatrix bad(1, 2);
  bad.values[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(hungarian_match(bad), std::invalid_argument);
}

TEST(Hungarian, EqualsExhaustiveSearch) {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const bool integral = trial % 2 == 0;
    const CostMatrix c = test::random_cost_matrix(rng, integral);
    const std::size_t rows = c.rows;
    const auto [best, arg] = brute_force_assignment(c);
    const auto m = hungarian_match(c);
    ASSERT_EQ(m.assignment.size(), rows);
    std::vector<std::size_t> sorted = m.assignment;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end()) << "not injective";
    EXPECT_EQ(assignment_cost(c, m.assignment), best) << "trial " << trial;
    if (!integral) EXPECT_EQ(m.assignment, arg) << "trial " << trial;
    EXPECT_EQ(m.cost, assignment_cost(c, m.assignment));
  }
}

TEST(Hungarian, QueryToGtInverse) {
  CostMatrix c(2, 4);
  c.values = {5, 1, 5, 5, 5, 5, 5, 0};
  const auto m = hungarian_match(c);
  const auto inv = m.query_to_gt(4);
  EXPECT_EQ(inv, (std::vector<long>{-1, 0, -1, 1}));
}

}  // namespace
}  // namespace cva
