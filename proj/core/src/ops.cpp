#include "cva/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace cva {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RMat>;
using MMap = Eigen::Map<RMat>;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

CMap cmap(const double* p, std::size_t r, std::size_t c) {
  return CMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MMap mmap(double* p, std::size_t r, std::size_t c) {
  return MMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool tracks(const ImplPtr& p) { return p->requires_grad; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(x.shape()));
  }
}

template <class F, class D>
Tensor unary(std::string_view op, const Tensor& x, F f, D dfdx_from_xy) {
  Storage y(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xs[i]);
  ImplPtr xi = x.impl();
  auto yi = std::make_shared<Storage>();
  const bool rec = detail::needs_grad({&x});
  if (rec) *yi = y;
  return detail::make_result(op, x.shape(), std::move(y), {&x},
                             [xi, yi, dfdx_from_xy](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t i = 0; i < gx.size(); ++i)
                                 gx[i] += g[i] * dfdx_from_xy(xi->data[i], (*yi)[i]);
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Storage out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("add", a.shape(), std::move(out), {&a, &b},
                             [ai, bi](std::span<const double> g) {
                               if (tracks(ai)) ai->accumulate(g);
                               if (tracks(bi)) bi->accumulate(g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Storage out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("sub", a.shape(), std::move(out), {&a, &b},
                             [ai, bi](std::span<const double> g) {
                               if (tracks(ai)) ai->accumulate(g);
                               if (tracks(bi)) {
                                 auto& gb = bi->grad_buffer();
                                 for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Storage out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("mul", a.shape(), std::move(out), {&a, &b},
                             [ai, bi](std::span<const double> g) {
                               if (tracks(ai)) {
                                 auto& ga = ai->grad_buffer();
                                 for (std::size_t i = 0; i < ga.size(); ++i)
                                   ga[i] += g[i] * bi->data[i];
                               }
                               if (tracks(bi)) {
                                 auto& gb = bi->grad_buffer();
                                 for (std::size_t i = 0; i < gb.size(); ++i)
                                   gb[i] += g[i] * ai->data[i];
                               }
                             });
}

Tensor scale(const Tensor& x, double factor) {
  Storage out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  ImplPtr xi = x.impl();
  return detail::make_result("scale", x.shape(), std::move(out), {&x},
                             [xi, factor](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
                             });
}

Tensor add_scalar(const Tensor& x, double value) {
  Storage out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + value;
  ImplPtr xi = x.impl();
  return detail::make_result("add_scalar", x.shape(), std::move(out), {&x},
                             [xi](std::span<const double> g) { xi->accumulate(g); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: cannot broadcast " + shape_str(bias.shape()) + " over " +
                         shape_str(x.shape()));
  }
  const std::size_t d = bias.dim(0);
  const std::size_t rows = x.size() / d;
  Storage out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias.data()[j];
  ImplPtr xi = x.impl(), bi = bias.impl();
  return detail::make_result("add_bias", x.shape(), std::move(out), {&x, &bias},
                             [xi, bi, rows, d](std::span<const double> g) {
                               if (tracks(xi)) xi->accumulate(g);
                               if (tracks(bi)) {
                                 auto& gb = bi->grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                               }
                             });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || x.shape().front() != bias.dim(0)) {
    throw DimensionError("add_channel_bias: cannot broadcast " + shape_str(bias.shape()) +
                         " over " + shape_str(x.shape()));
  }
  const std::size_t m = bias.dim(0);
  const std::size_t inner = x.size() / m;
  Storage out(x.data().begin(), x.data().end());
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t j = 0; j < inner; ++j) out[c * inner + j] += bias.data()[c];
  ImplPtr xi = x.impl(), bi = bias.impl();
  return detail::make_result("add_channel_bias", x.shape(), std::move(out), {&x, &bias},
                             [xi, bi, m, inner](std::span<const double> g) {
                               if (tracks(xi)) xi->accumulate(g);
                               if (tracks(bi)) {
                                 auto& gb = bi->grad_buffer();
                                 for (std::size_t c = 0; c < m; ++c) {
                                   double s = 0.0;
                                   for (std::size_t j = 0; j < inner; ++j) s += g[c * inner + j];
                                   gb[c] += s;
                                 }
                               }
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Storage out(m * n);
  mmap(out.data(), m, n).noalias() = cmap(a.ptr(), m, k) * cmap(b.ptr(), k, n);
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result(
      "matmul", {m, n}, std::move(out), {&a, &b}, [ai, bi, m, k, n](std::span<const double> g) {
        auto gm = cmap(g.data(), m, n);
        if (tracks(ai)) {
          mmap(ai->grad_buffer().data(), m, k).noalias() +=
              gm * cmap(bi->data.data(), k, n).transpose();
        }
        if (tracks(bi)) {
          mmap(bi->grad_buffer().data(), k, n).noalias() +=
              cmap(ai->data.data(), m, k).transpose() * gm;
        }
      });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  Storage out(r * c);
  mmap(out.data(), c, r) = cmap(x.ptr(), r, c).transpose();
  ImplPtr xi = x.impl();
  return detail::make_result("transpose", {c, r}, std::move(out), {&x},
                             [xi, r, c](std::span<const double> g) {
                               mmap(xi->grad_buffer().data(), r, c) +=
                                   cmap(g.data(), c, r).transpose();
                             });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " (" +
                         std::to_string(x.size()) + " elements) as " + shape_str(new_shape));
  }
  Storage out(x.data().begin(), x.data().end());
  ImplPtr xi = x.impl();
  return detail::make_result("reshape", std::move(new_shape), std::move(out), {&x},
                             [xi](std::span<const double> g) { xi->accumulate(g); });
}

namespace {

struct AxisLayout {
  std::size_t outer, n, inner;
};

AxisLayout axis_layout(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  }
  AxisLayout l{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) l.inner *= x.dim(i);
  return l;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto l = axis_layout("softmax", x, axis);
  const auto xs = x.data();
  Storage y(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.n * l.inner + in;
      double mx = xs[base];
      for (std::size_t j = 1; j < l.n; ++j) mx = std::max(mx, xs[base + j * l.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) {
        const double e = std::exp(xs[base + j * l.inner] - mx);
        y[base + j * l.inner] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (std::size_t j = 0; j < l.n; ++j) y[base + j * l.inner] *= inv;
    }
  }
  ImplPtr xi = x.impl();
  auto saved = std::make_shared<Storage>();
  if (detail::needs_grad({&x})) *saved = y;
  return detail::make_result(
      "softmax", x.shape(), std::move(y), {&x}, [xi, saved, l](std::span<const double> g) {
        auto& gx = xi->grad_buffer();
        const auto& ys = *saved;
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.n * l.inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < l.n; ++j) {
              const std::size_t idx = base + j * l.inner;
              dot += g[idx] * ys[idx];
            }
            for (std::size_t j = 0; j < l.n; ++j) {
              const std::size_t idx = base + j * l.inner;
              gx[idx] += ys[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto l = axis_layout("log_softmax", x, axis);
  const auto xs = x.data();
  Storage y(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.n * l.inner + in;
      double mx = xs[base];
      for (std::size_t j = 1; j < l.n; ++j) mx = std::max(mx, xs[base + j * l.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) s += std::exp(xs[base + j * l.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t j = 0; j < l.n; ++j) y[base + j * l.inner] = xs[base + j * l.inner] - lse;
    }
  }
  ImplPtr xi = x.impl();
  auto saved = std::make_shared<Storage>();
  if (detail::needs_grad({&x})) *saved = y;
  return detail::make_result(
      "log_softmax", x.shape(), std::move(y), {&x}, [xi, saved, l](std::span<const double> g) {
        auto& gx = xi->grad_buffer();
        const auto& ys = *saved;
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.n * l.inner + in;
            double gs = 0.0;
            for (std::size_t j = 0; j < l.n; ++j) gs += g[base + j * l.inner];
            for (std::size_t j = 0; j < l.n; ++j) {
              const std::size_t idx = base + j * l.inner;
              gx[idx] += g[idx] - std::exp(ys[idx]) * gs;
            }
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  ImplPtr xi = x.impl();
  return detail::make_result("sum", {}, {s}, {&x}, [xi](std::span<const double> g) {
    auto& gx = xi->grad_buffer();
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.data()) s += v;
  ImplPtr xi = x.impl();
  return detail::make_result("mean", {}, {s / n}, {&x}, [xi, n](std::span<const double> g) {
    auto& gx = xi->grad_buffer();
    for (auto& v : gx) v += g[0] / n;
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank("mean_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  Storage out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[r * d + j];
  for (auto& v : out) v /= static_cast<double>(n);
  ImplPtr xi = x.impl();
  return detail::make_result("mean_rows", {d}, std::move(out), {&x},
                             [xi, n, d](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               const double inv = 1.0 / static_cast<double>(n);
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[j] * inv;
                             });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t din = weight.dim(0), dout = weight.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != dout) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match d_out " +
                         std::to_string(dout));
  }
  const std::size_t rows = x.size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Storage out(rows * dout);
  auto om = mmap(out.data(), rows, dout);
  om.noalias() = cmap(x.ptr(), rows, din) * cmap(weight.ptr(), din, dout);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.ptr(), static_cast<Eigen::Index>(dout));
  ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
  return detail::make_result(
      "linear", std::move(out_shape), std::move(out), {&x, &weight, &bias},
      [xi, wi, bi, rows, din, dout](std::span<const double> g) {
        auto gm = cmap(g.data(), rows, dout);
        if (tracks(xi)) {
          mmap(xi->grad_buffer().data(), rows, din).noalias() +=
              gm * cmap(wi->data.data(), din, dout).transpose();
        }
        if (tracks(wi)) {
          mmap(wi->grad_buffer().data(), din, dout).noalias() +=
              cmap(xi->data.data(), rows, din).transpose() * gm;
        }
        if (tracks(bi)) {
          Eigen::Map<Eigen::RowVectorXd>(bi->grad_buffer().data(),
                                         static_cast<Eigen::Index>(dout)) += gm.colwise().sum();
        }
      });
}

Tensor channel_map(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("channel_map", x, 3);
  if (weight.rank() != 2 || weight.dim(1) != x.dim(0)) {
    throw DimensionError("channel_map: weight " + shape_str(weight.shape()) +
                         " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t cin = x.dim(0), cout = weight.dim(0), hw = x.dim(1) * x.dim(2);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("channel_map: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  Storage out(cout * hw);
  auto om = mmap(out.data(), cout, hw);
  om.noalias() = cmap(weight.ptr(), cout, cin) * cmap(x.ptr(), cin, hw);
  om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.ptr(), static_cast<Eigen::Index>(cout));
  ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
  return detail::make_result(
      "channel_map", {cout, x.dim(1), x.dim(2)}, std::move(out), {&x, &weight, &bias},
      [xi, wi, bi, cin, cout, hw](std::span<const double> g) {
        auto gm = cmap(g.data(), cout, hw);
        if (tracks(xi)) {
          mmap(xi->grad_buffer().data(), cin, hw).noalias() +=
              cmap(wi->data.data(), cout, cin).transpose() * gm;
        }
        if (tracks(wi)) {
          mmap(wi->grad_buffer().data(), cout, cin).noalias() +=
              gm * cmap(xi->data.data(), cin, hw).transpose();
        }
        if (tracks(bi)) {
          Eigen::Map<Eigen::VectorXd>(bi->grad_buffer().data(), static_cast<Eigen::Index>(cout)) +=
              gm.rowwise().sum();
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, Conv2dOptions opt) {
  return conv2d(x, weight, Tensor(Shape{0}), opt);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d weight", weight, 4);
  if (opt.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                         std::to_string(weight.dim(1)) + " input channels, got " +
                         shape_str(x.shape()));
  }
  if (kh > h + 2 * opt.padding || kw > w + 2 * opt.padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.size() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t ho = (h + 2 * opt.padding - kh) / opt.stride + 1;
  const std::size_t wo = (w + 2 * opt.padding - kw) / opt.stride + 1;
  const std::size_t K = cin * kh * kw, P = ho * wo;
  const auto s = static_cast<std::ptrdiff_t>(opt.stride);
  const auto pad = static_cast<std::ptrdiff_t>(opt.padding);

  // im2col: cols[(c*kh + ky)*kw + kx, oy*wo + ox]
  auto cols = std::make_shared<Storage>(K * P, 0.0);
  const auto xs = x.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols->data() + ((c * kh + ky) * kw + kx) * P;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* xrow = xs.data() + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            row[oy * wo + ox] = xrow[ix];
          }
        }
      }
    }
  }
  Storage out(cout * P);
  auto om = mmap(out.data(), cout, P);
  om.noalias() = cmap(weight.ptr(), cout, K) * cmap(cols->data(), K, P);
  if (has_bias) {
    om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.ptr(), static_cast<Eigen::Index>(cout));
  }
  ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
  if (!detail::needs_grad({&x, &weight, &bias})) cols.reset();
  return detail::make_result(
      "conv2d", {cout, ho, wo}, std::move(out), {&x, &weight, &bias},
      [=](std::span<const double> g) {
        auto gm = cmap(g.data(), cout, P);
        if (tracks(wi)) {
          mmap(wi->grad_buffer().data(), cout, K).noalias() +=
              gm * cmap(cols->data(), K, P).transpose();
        }
        if (has_bias && tracks(bi)) {
          Eigen::Map<Eigen::VectorXd>(bi->grad_buffer().data(), static_cast<Eigen::Index>(cout)) +=
              gm.rowwise().sum();
        }
        if (tracks(xi)) {
          RMat gcols = cmap(wi->data.data(), cout, K).transpose() * gm;
          auto& gx = xi->grad_buffer();
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* row = gcols.data() + ((c * kh + ky) * kw + kx) * P;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy) * s +
                                  static_cast<std::ptrdiff_t>(ky) - pad;
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  double* gxrow = gx.data() + (c * h + static_cast<std::size_t>(iy)) * w;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox) * s +
                                    static_cast<std::ptrdiff_t>(kx) - pad;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    gxrow[ix] += row[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

namespace {

// Normalizes `groups` contiguous runs of length n. Returns xhat and 1/std per run.
void normalize_runs(std::span<const double> x, std::size_t groups, std::size_t n, double eps,
                    Storage& xhat, Storage& inv_std) {
  xhat.resize(x.size());
  inv_std.resize(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* p = x.data() + gi * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += p[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[gi] = is;
    for (std::size_t j = 0; j < n; ++j) xhat[gi * n + j] = (p[j] - mu) * is;
  }
}

// d(loss)/dx given d(loss)/dxhat for one normalized run.
void normalize_backward(const double* dxhat, const double* xhat, double inv_std, std::size_t n,
                        double* gx) {
  double sg = 0.0, sgx = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sg += dxhat[j];
    sgx += dxhat[j] * xhat[j];
  }
  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    gx[j] += inv_std / nn * (nn * dxhat[j] - sg - xhat[j] * sgx);
  }
}

}  // namespace

Tensor instance_norm(const Tensor& x, double eps) {
  require_rank("instance_norm", x, 3);
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  auto xhat = std::make_shared<Storage>();
  auto inv_std = std::make_shared<Storage>();
  normalize_runs(x.data(), c, n, eps, *xhat, *inv_std);
  Storage out = *xhat;
  ImplPtr xi = x.impl();
  return detail::make_result("instance_norm", x.shape(), std::move(out), {&x},
                             [xi, xhat, inv_std, c, n](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t ci = 0; ci < c; ++ci) {
                                 normalize_backward(g.data() + ci * n, xhat->data() + ci * n,
                                                    (*inv_std)[ci], n, gx.data() + ci * n);
                               }
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0 || gain.rank() != 1 || bias.shape() != gain.shape() ||
      x.shape().back() != gain.dim(0)) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " incompatible with gain " +
                         shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()));
  }
  const std::size_t d = gain.dim(0), rows = x.size() / d;
  auto xhat = std::make_shared<Storage>();
  auto inv_std = std::make_shared<Storage>();
  normalize_runs(x.data(), rows, d, eps, *xhat, *inv_std);
  Storage out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = (*xhat)[r * d + j] * gain.data()[j] + bias.data()[j];
  ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  return detail::make_result(
      "layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
      [xi, gi, bi, xhat, inv_std, rows, d](std::span<const double> g) {
        if (tracks(gi)) {
          auto& gg = gi->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
        }
        if (tracks(bi)) {
          auto& gb = bi->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (tracks(xi)) {
          auto& gx = xi->grad_buffer();
          Storage dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) dxhat[j] = g[r * d + j] * gi->data[j];
            normalize_backward(dxhat.data(), xhat->data() + r * d, (*inv_std)[r], d,
                               gx.data() + r * d);
          }
        }
      });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank("slice_rows", x, 2);
  const std::size_t cols = x.dim(1);
  if (start + count > x.dim(0)) throw DimensionError("slice_rows: range out of bounds");
  Storage out(x.data().begin() + static_cast<std::ptrdiff_t>(start * cols),
                          x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  ImplPtr xi = x.impl();
  return detail::make_result("slice_rows", {count, cols}, std::move(out), {&x},
                             [xi, start, cols](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) gx[start * cols + i] += g[i];
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (start + count > cols) throw DimensionError("slice_cols: range out of bounds");
  Storage out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = x.data()[r * cols + start + j];
  ImplPtr xi = x.impl();
  return detail::make_result("slice_cols", {rows, count}, std::move(out), {&x},
                             [xi, rows, cols, start, count](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t j = 0; j < count; ++j)
                                   gx[r * cols + start + j] += g[r * count + j];
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  require_rank("concat_rows", parts[0], 2);
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank("concat_rows", p, 2);
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column count mismatch " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    rows += p.dim(0);
  }
  Storage out;
  out.reserve(rows * cols);
  std::vector<ImplPtr> impls;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    impls.push_back(p.impl());
    inputs.push_back(&p);
  }
  return detail::make_result("concat_rows", {rows, cols}, std::move(out), inputs,
                             [impls](std::span<const double> g) {
                               std::size_t off = 0;
                               for (const auto& p : impls) {
                                 if (p->requires_grad) p->accumulate(g.subspan(off, p->data.size()));
                                 off += p->data.size();
                               }
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  require_rank("concat_cols", parts[0], 2);
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    cols += p.dim(1);
  }
  Storage out(rows * cols);
  std::vector<ImplPtr> impls;
  std::vector<const Tensor*> inputs;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pc; ++j) out[r * cols + off + j] = p.data()[r * pc + j];
    off += pc;
    impls.push_back(p.impl());
    inputs.push_back(&p);
  }
  return detail::make_result("concat_cols", {rows, cols}, std::move(out), inputs,
                             [impls, rows, cols](std::span<const double> g) {
                               std::size_t off = 0;
                               for (const auto& p : impls) {
                                 const std::size_t pc = p->shape[1];
                                 if (p->requires_grad) {
                                   auto& gp = p->grad_buffer();
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < pc; ++j)
                                       gp[r * pc + j] += g[r * cols + off + j];
                                 }
                                 off += pc;
                               }
                             });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank("pick", x, 2);
  const std::size_t n = x.dim(0), k = x.dim(1);
  if (index.size() != n) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(n) + " rows");
  }
  Storage out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= k) throw DimensionError("pick: index out of range");
    out[i] = x.data()[i * k + index[i]];
  }
  ImplPtr xi = x.impl();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return detail::make_result("pick", {n}, std::move(out), {&x},
                             [xi, idx, k](std::span<const double> g) {
                               auto& gx = xi->grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i) gx[i * k + idx[i]] += g[i];
                             });
}

}  // namespace cva
