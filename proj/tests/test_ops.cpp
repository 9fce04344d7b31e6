#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cva/ops.hpp"
#include "support/gradcheck.hpp"

namespace cva {
namespace {

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at({i, p}) * b.at({p, j});
  return out;
}

std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                               std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double s = bias.size() ? bias.data()[o] : 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              s += x.at({c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}) * w.at({o, c, i, j});
            }
        out[(o * oh + y) * ow + xx] = s;
      }
  return out;
}

TEST(Matmul, IdentityCase) {
  Tensor r = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(r.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{3, 4, 5, 6}));
}

TEST(Matmul, DotProduct) {
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor a = test::random_tensor({4, 5}, rng), b = test::random_tensor({5, 3}, rng);
    const auto ref = naive_matmul(a, b);
    const Tensor prod = matmul(a, b);
    const auto got = prod.data();
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformForEqualInputs) {
  Tensor s = softmax(Tensor::vector({0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, StableForLargeInputs) {
  Tensor s = softmax(Tensor::vector({1000, 0}), 0);
  EXPECT_DOUBLE_EQ(s.data()[0], 1.0);
  EXPECT_GE(s.data()[1], 0.0);
  EXPECT_LT(s.data()[1], 1e-300);
  EXPECT_TRUE(std::isfinite(s.data()[1]));
}

TEST(Softmax, MatchesDirectFormula) {
  Tensor s = softmax(Tensor::vector({1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.data()[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, SlicesSumToOneAlongEachAxis) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = test::random_tensor({3, 4, 5}, rng, 5.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Tensor s = softmax(x, axis);
      const auto& sh = s.shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t a = 0; a < axis; ++a) outer *= sh[a];
      for (std::size_t a = axis + 1; a < 3; ++a) inner *= sh[a];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          double total = 0.0;
          for (std::size_t k = 0; k < sh[axis]; ++k) {
            const double v = s.data()[(o * sh[axis] + k) * inner + i];
            EXPECT_GT(v, 0.0);
            total += v;
          }
          EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
  }
}

TEST(Softmax, AxisOutOfRange) { EXPECT_THROW(softmax(Tensor({2, 2}), 2), DimensionError); }

TEST(Reshape, PreservesRowMajorOrder) {
  Tensor x({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor r = reshape(x, {3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.at({1, 0}), 3.0);
  EXPECT_EQ(r.at({2, 1}), 6.0);
}

TEST(Reshape, RoundTrip) {
  Tensor x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor back = reshape(reshape(x, {2, 2}), {1, 2, 2});
  EXPECT_TRUE(back.equals(x));
}

TEST(Reshape, CountMismatch) { EXPECT_THROW(reshape(Tensor({2, 3}), {4, 2}), DimensionError); }

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  Tensor x = test::random_tensor({1, 3, 3}, rng);
  Tensor y = conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), {1, 0});
  EXPECT_TRUE(y.equals(x));
}

TEST(Conv2d, CountingKernel) {
  Tensor y = conv2d(Tensor({1, 4, 4}, 1.0), Tensor({1, 1, 2, 2}, 1.0), {2, 0});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 4.0);
}

TEST(Conv2d, MatchesDirectLoops) {
  struct Case {
    std::size_t ci, co, h, w, k, stride, pad;
  };
  const Case cases[] = {{2, 3, 5, 6, 3, 1, 1}, {1, 2, 7, 7, 3, 2, 1}, {3, 2, 6, 5, 2, 2, 0},
                        {2, 2, 4, 4, 1, 1, 0}, {4, 1, 9, 8, 3, 4, 1}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Case& c = cases[seed % std::size(cases)];
    Rng rng(seed);
    Tensor x = test::random_tensor({c.ci, c.h, c.w}, rng);
    Tensor w = test::random_tensor({c.co, c.ci, c.k, c.k}, rng);
    Tensor b = test::random_tensor({c.co}, rng);
    const auto ref = naive_conv(x, w, b, c.stride, c.pad);
    Tensor y = conv2d(x, w, b, {c.stride, c.pad});
    EXPECT_EQ(y.shape()[1], (c.h + 2 * c.pad - c.k) / c.stride + 1);
    ASSERT_EQ(y.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, KernelLargerThanPaddedInput) {
  EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), {1, 0}), DimensionError);
}

TEST(Linear, IdentityAndBias) {
  Rng rng(2);
  Tensor x = test::random_tensor({3, 4}, rng);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.mutable_data()[i * 5] = 1.0;
  EXPECT_TRUE(linear(x, eye, Tensor({4})).equals(x));
  Tensor b = Tensor::vector({1, 2, 3});
  Tensor y = linear(x, Tensor({4, 3}), b);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at({r, c}), b.data()[c]);
}

TEST(Linear, DimensionMismatch) { EXPECT_THROW(linear(Tensor({2, 3}), Tensor({4, 2}), Tensor({2})), DimensionError); }

TEST(Concat, RowsAndColumns) {
  Tensor a = Tensor::matrix({{1, 2}}), b = Tensor::matrix({{3, 4}, {5, 6}});
  const Tensor rows[] = {a, b};
  Tensor r = concat_rows(rows);
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.at({2, 1}), 6.0);
  Tensor c = Tensor::matrix({{7}, {8}});
  const Tensor cols[] = {b, c};
  Tensor cc = concat_cols(cols);
  EXPECT_EQ(cc.shape(), (Shape{2, 3}));
  EXPECT_EQ(cc.at({1, 2}), 8.0);
}

TEST(Pick, SelectsPerRow) {
  Tensor x = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const std::size_t idx[] = {2, 0};
  Tensor p = pick(x, idx);
  EXPECT_EQ(p.data()[0], 3.0);
  EXPECT_EQ(p.data()[1], 4.0);
}

TEST(Norms, InstanceNormZeroMeanUnitVariance) {
  Rng rng(4);
  Tensor y = instance_norm(test::random_tensor({2, 4, 4}, rng, 3.0), 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 16; ++i) m += y.data()[c * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.data()[c * 16 + i] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 16, 1.0, 1e-9);
  }
}

}  // namespace
}  // namespace cva
