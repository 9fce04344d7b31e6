#include <gtest/gtest.h>

#include <cmath>

#include "cva/adam.hpp"
#include "cva/ops.hpp"

namespace cva {
namespace {

TEST(Adam, ZeroGradientOnlyDecays) {
  Tensor p[] = {Tensor::vector({1.0, -2.0})};
  AdamOptions o;
  auto state = AdamState::for_params(p, o);
  const std::vector<double> g[] = {{0.0, 0.0}};
  adam_step(p, g, state);
  EXPECT_DOUBLE_EQ(p[0].data()[0], 1.0 - o.learning_rate * o.weight_decay * 1.0);
  EXPECT_DOUBLE_EQ(p[0].data()[1], -2.0 - o.learning_rate * o.weight_decay * -2.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  // After one step m_hat = g and v_hat = g^2, so the update is
  // lr * (g / (|g| + eps) + wd * p).
  const double g0 = 0.37, g1 = -5.0, p0 = 0.5, p1 = 2.0;
  Tensor p[] = {Tensor::vector({p0, p1})};
  AdamOptions o;
  auto state = AdamState::for_params(p, o);
  const std::vector<double> g[] = {{g0, g1}};
  adam_step(p, g, state);
  auto expected = [&](double pv, double gv) {
    return pv - o.learning_rate * (gv / (std::abs(gv) + o.epsilon) + o.weight_decay * pv);
  };
  EXPECT_NEAR(p[0].data()[0], expected(p0, g0), 1e-15);
  EXPECT_NEAR(p[0].data()[1], expected(p1, g1), 1e-15);
  EXPECT_EQ(state.first_moment[0].size(), 2u);
}

TEST(Adam, StepCounterIncrements) {
  Tensor p[] = {Tensor::vector({1.0})};
  auto state = AdamState::for_params(p, {});
  const std::vector<double> g[] = {{1.0}};
  for (std::uint64_t i = 1; i <= 5; ++i) {
    adam_step(p, g, state);
    EXPECT_EQ(state.step, i);
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p[] = {Tensor::vector({1.0, 2.0})};
  auto state = AdamState::for_params(p, {});
  const std::vector<double> g[] = {{1.0}};
  EXPECT_THROW(adam_step(p, g, state), std::invalid_argument);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParameterSet params;
  Tensor& x = params.add("x", Tensor::vector({0.0}));
  AdamOptions o;
  o.learning_rate = 2e-4 * 50;
  o.weight_decay = 0.0;
  Adam adam(params, o);
  int steps = 0;
  for (; steps < 2000; ++steps) {
    adam.zero_grad();
    Tensor d = add_scalar(x, -3.0);
    backward(sum(mul(d, d)));
    adam.step();
  }
  EXPECT_LT(std::abs(x.data()[0] - 3.0), 0.01);
}

TEST(ClipGradNorm, RescalesToMax) {
  Tensor a = Tensor::vector({0.0, 0.0});
  a.set_requires_grad();
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  Tensor ps[] = {a};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 1.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

}  // namespace
}  // namespace cva
