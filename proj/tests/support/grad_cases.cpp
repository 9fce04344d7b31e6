#include "support/grad_cases.hpp"

#include <cmath>

#include "cva/backbone.hpp"
#include "cva/fusion.hpp"
#include "cva/head.hpp"
#include "cva/losses.hpp"
#include "cva/model.hpp"
#include "cva/ops.hpp"
#include "support/gradcheck.hpp"

namespace cva::test {

namespace {

// Random linear readout so that no gradient vanishes by symmetry
// (sum(softmax(x)) would have an identically zero gradient).
Tensor readout(const Tensor& y, Rng& rng) {
  Tensor r = random_tensor(y.shape(), rng);
  return sum(mul(y, r));
}

using Unary = std::function<Tensor(const Tensor&)>;

GradCase unary(std::string name, Shape shape, Unary f, double offset = 0.0, bool positive = false) {
  return {std::move(name), [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor x = random_tensor(shape, rng);
            if (positive) {
              for (auto& v : x.mutable_data()) v = std::abs(v) + 0.5;
            }
            for (auto& v : x.mutable_data()) v += offset;
            Tensor r = random_tensor(f(x.detach()).shape(), rng);
            Tensor inputs[] = {x};
            return grad_check([&] { return sum(mul(f(inputs[0]), r)); }, inputs);
          }};
}

using Binary = std::function<Tensor(const Tensor&, const Tensor&)>;

GradCase binary(std::string name, Shape a, Shape b, Binary f) {
  return {std::move(name), [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor inputs[] = {random_tensor(a, rng), random_tensor(b, rng)};
            Tensor r = random_tensor(f(inputs[0].detach(), inputs[1].detach()).shape(), rng);
            return grad_check([&] { return sum(mul(f(inputs[0], inputs[1]), r)); }, inputs);
          }};
}

using Ternary = std::function<Tensor(const Tensor&, const Tensor&, const Tensor&)>;

GradCase ternary(std::string name, Shape a, Shape b, Shape c, Ternary f) {
  return {std::move(name), [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor inputs[] = {random_tensor(a, rng), random_tensor(b, rng), random_tensor(c, rng)};
            Tensor r = random_tensor(f(inputs[0].detach(), inputs[1].detach(), inputs[2].detach()).shape(), rng);
            return grad_check([&] { return sum(mul(f(inputs[0], inputs[1], inputs[2]), r)); }, inputs);
          }};
}

FeaturePyramid random_pyramid(std::size_t c, Rng& rng) {
  FeaturePyramid p;
  p[0] = random_tensor({c, 3, 3}, rng);
  p[1] = random_tensor({c, 2, 2}, rng);
  p[2] = random_tensor({c, 1, 2}, rng);
  return p;
}

double pyramid_readout_check(const std::function<FeaturePyramid()>& forward, std::vector<Tensor> inputs,
                             Rng& rng) {
  FeaturePyramid shape_probe;
  {
    NoGradGuard g;
    shape_probe = forward();
  }
  std::array<Tensor, kPyramidLevels> r;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) r[i] = random_tensor(shape_probe[i].shape(), rng);
  auto loss = [&] {
    const FeaturePyramid out = forward();
    Tensor total = sum(mul(out[0], r[0]));
    for (std::size_t i = 1; i < kPyramidLevels; ++i) total = add(total, sum(mul(out[i], r[i])));
    return total;
  };
  return grad_check(loss, inputs);
}

std::vector<Tensor> pyramid_tensors(const FeaturePyramid& p) {
  return {p.levels.begin(), p.levels.end()};
}

std::vector<GradCase> build() {
  std::vector<GradCase> cases;
  cases.push_back(binary("add", {3, 4}, {3, 4}, [](auto& a, auto& b) { return add(a, b); }));
  cases.push_back(binary("sub", {3, 4}, {3, 4}, [](auto& a, auto& b) { return sub(a, b); }));
  cases.push_back(binary("mul", {3, 4}, {3, 4}, [](auto& a, auto& b) { return mul(a, b); }));
  cases.push_back(unary("scale", {5}, [](auto& x) { return scale(x, -1.7); }));
  cases.push_back(unary("add_scalar", {5}, [](auto& x) { return add_scalar(x, 0.3); }));
  cases.push_back(unary("relu", {3, 5}, [](auto& x) { return relu(x); }));
  cases.push_back(unary("sigmoid", {3, 5}, [](auto& x) { return sigmoid(x); }));
  cases.push_back(unary("exp", {3, 5}, [](auto& x) { return exp(x); }));
  cases.push_back(unary("log", {3, 5}, [](auto& x) { return log(x); }, 0.0, true));
  cases.push_back(unary("abs", {3, 5}, [](auto& x) { return abs(x); }));
  cases.push_back(binary("add_bias", {2, 3, 4}, {4}, [](auto& x, auto& b) { return add_bias(x, b); }));
  cases.push_back(binary("add_channel_bias", {3, 2, 2}, {3},
                         [](auto& x, auto& b) { return add_channel_bias(x, b); }));
  cases.push_back(binary("matmul", {4, 5}, {5, 3}, [](auto& a, auto& b) { return matmul(a, b); }));
  cases.push_back(unary("transpose", {3, 4}, [](auto& x) { return transpose(x); }));
  cases.push_back(binary("reshape_matmul", {2, 6}, {4, 5},
                         [](auto& a, auto& b) { return matmul(reshape(a, {3, 4}), b); }));
  for (std::size_t axis = 0; axis < 3; ++axis) {
    cases.push_back(unary("softmax_axis" + std::to_string(axis), {2, 3, 4},
                          [axis](auto& x) { return softmax(x, axis); }));
    cases.push_back(unary("log_softmax_axis" + std::to_string(axis), {2, 3, 4},
                          [axis](auto& x) { return log_softmax(x, axis); }));
  }
  cases.push_back(unary("sum", {3, 4}, [](auto& x) { return scale(sum(mul(x, x)), 0.5); }));
  cases.push_back(unary("mean", {3, 4}, [](auto& x) { return mean(mul(x, x)); }));
  cases.push_back(unary("mean_rows", {5, 3}, [](auto& x) { return mean_rows(x); }));
  cases.push_back(ternary("linear", {4, 3}, {3, 5}, {5},
                          [](auto& x, auto& w, auto& b) { return linear(x, w, b); }));
  cases.push_back(ternary("linear_rank3", {2, 4, 3}, {3, 2}, {2},
                          [](auto& x, auto& w, auto& b) { return linear(x, w, b); }));
  cases.push_back(ternary("channel_map", {3, 4, 5}, {2, 3}, {2},
                          [](auto& x, auto& w, auto& b) { return channel_map(x, w, b); }));
  cases.push_back(ternary("conv2d_s1p1", {2, 5, 6}, {3, 2, 3, 3}, {3},
                          [](auto& x, auto& w, auto& b) { return conv2d(x, w, b, {1, 1}); }));
  cases.push_back(ternary("conv2d_s2p1", {2, 7, 7}, {2, 2, 3, 3}, {2},
                          [](auto& x, auto& w, auto& b) { return conv2d(x, w, b, {2, 1}); }));
  cases.push_back(binary("conv2d_nobias_s2p0", {3, 6, 6}, {2, 3, 2, 2},
                         [](auto& x, auto& w) { return conv2d(x, w, {2, 0}); }));
  cases.push_back(unary("instance_norm", {3, 4, 4}, [](auto& x) { return instance_norm(x); }));
  cases.push_back(ternary("layer_norm", {4, 6}, {6}, {6},
                          [](auto& x, auto& g, auto& b) { return layer_norm(x, g, b); }));
  cases.push_back(unary("slice_rows", {5, 3}, [](auto& x) { return slice_rows(x, 1, 3); }));
  cases.push_back(unary("slice_cols", {3, 5}, [](auto& x) { return slice_cols(x, 2, 2); }));
  cases.push_back(binary("concat_rows", {2, 3}, {4, 3}, [](auto& a, auto& b) {
    const Tensor parts[] = {a, b, a};
    return concat_rows(parts);
  }));
  cases.push_back(binary("concat_cols", {3, 2}, {3, 4}, [](auto& a, auto& b) {
    const Tensor parts[] = {b, a};
    return concat_cols(parts);
  }));
  cases.push_back(unary("pick", {4, 3}, [](auto& x) {
    const std::size_t idx[] = {2, 0, 1, 1};
    return pick(x, idx);
  }));

  cases.push_back({"giou_loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     std::uniform_real_distribution<double> c(0.2, 0.8), s(0.1, 0.5);
                     std::vector<double> p, t;
                     for (int i = 0; i < 6; ++i) {
                       p.insert(p.end(), {c(rng), c(rng), s(rng), s(rng)});
                       t.insert(t.end(), {c(rng), c(rng), s(rng), s(rng)});
                     }
                     Tensor inputs[] = {Tensor({6, 4}, p)};
                     const Tensor target({6, 4}, t);
                     Tensor r = random_tensor({6}, rng);
                     return grad_check([&] { return sum(mul(giou_loss(inputs[0], target), r)); }, inputs);
                   }});

  cases.push_back({"inter_fuse_level", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = 3;
                     auto hat = ChannelProjection::random(c, rng), tilde = ChannelProjection::random(c, rng);
                     hat.bias = random_tensor({c}, rng);
                     tilde.bias = random_tensor({c}, rng);
                     Tensor inputs[] = {random_tensor({c, 2, 3}, rng), random_tensor({c, 2, 3}, rng),
                                        hat.weight, hat.bias, tilde.weight, tilde.bias};
                     Tensor r = random_tensor({c, 2, 3}, rng);
                     return grad_check(
                         [&] { return sum(mul(inter_fuse_level(inputs[0], inputs[1], hat, tilde), r)); },
                         inputs);
                   }});
  cases.push_back({"intra_fuse_level", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = 3;
                     auto a = ChannelProjection::random(c, rng), b = ChannelProjection::random(c, rng),
                          d = ChannelProjection::random(c, rng);
                     Tensor inputs[] = {random_tensor({c, 2, 2}, rng), random_tensor({c, 2, 2}, rng),
                                        random_tensor({c, 2, 2}, rng), a.weight, b.weight, d.weight,
                                        a.bias, b.bias, d.bias};
                     Tensor r = random_tensor({c, 2, 2}, rng);
                     return grad_check(
                         [&] {
                           return sum(mul(intra_fuse_level(inputs[0], inputs[1], inputs[2], a, b, d), r));
                         },
                         inputs);
                   }});
  cases.push_back({"inter_fuse_stack", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ParameterSet params;
                     const auto w = InterFusionWeights::create(3, rng, params);
                     const FeaturePyramid l = random_pyramid(3, rng), g = random_pyramid(3, rng);
                     auto inputs = params.tensors();
                     for (auto& t : pyramid_tensors(l)) inputs.push_back(t);
                     for (auto& t : pyramid_tensors(g)) inputs.push_back(t);
                     return pyramid_readout_check([&] { return inter_fuse(l, g, w); }, inputs, rng);
                   }});
  cases.push_back({"intra_fuse_stack", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ParameterSet params;
                     const auto w = IntraFusionWeights::create(3, rng, params);
                     const FeaturePyramid a = random_pyramid(3, rng), b = random_pyramid(3, rng),
                                          c = random_pyramid(3, rng);
                     auto inputs = params.tensors();
                     for (const auto* p : {&a, &b, &c})
                       for (auto& t : pyramid_tensors(*p)) inputs.push_back(t);
                     return pyramid_readout_check([&] { return intra_fuse(a, b, c, w); }, inputs, rng);
                   }});
  cases.push_back({"clip_fusion_chain", [](std::uint64_t seed) {
                     // Three frames through inter fusion, then intra fusion.
                     Rng rng(seed);
                     ParameterSet params;
                     const auto wi = InterFusionWeights::create(2, rng, params);
                     const auto wa = IntraFusionWeights::create(2, rng, params);
                     std::array<FeaturePyramid, 3> l, g;
                     auto inputs = params.tensors();
                     for (std::size_t j = 0; j < 3; ++j) {
                       l[j] = random_pyramid(2, rng);
                       g[j] = random_pyramid(2, rng);
                       for (auto& t : pyramid_tensors(l[j])) inputs.push_back(t);
                       for (auto& t : pyramid_tensors(g[j])) inputs.push_back(t);
                     }
                     return pyramid_readout_check(
                         [&] {
                           return intra_fuse(inter_fuse(l[0], g[0], wi), inter_fuse(l[1], g[1], wi),
                                             inter_fuse(l[2], g[2], wi), wa);
                         },
                         inputs, rng);
                   }});
  cases.push_back({"backbone", [](std::uint64_t seed) {
                     Rng rng(seed);
                     BackboneConfig bc;
                     bc.height = bc.width = 32;
                     bc.stem_channels = 2;
                     bc.channels = {2, 3, 4};
                     bc.d_model = 4;
                     ParameterSet params;
                     Backbone net(bc, rng, params);
                     const Tensor frame = random_tensor({1, 32, 32}, rng);
                     GradCheckOptions opt;
                     opt.max_probes = 6;
                     opt.seed = seed;
                     // Thousands of ReLU inputs: a smaller step keeps probes off the kinks.
                     opt.step = 1e-6;
                     auto inputs = params.tensors();
                     FeaturePyramid probe;
                     {
                       NoGradGuard g;
                       probe = net.extract(frame);
                     }
                     std::array<Tensor, kPyramidLevels> r;
                     for (std::size_t i = 0; i < kPyramidLevels; ++i) r[i] = random_tensor(probe[i].shape(), rng);
                     return grad_check(
                         [&] {
                           const auto p = net.extract(frame);
                           Tensor t = sum(mul(p[0], r[0]));
                           for (std::size_t i = 1; i < kPyramidLevels; ++i) t = add(t, sum(mul(p[i], r[i])));
                           return t;
                         },
                         inputs, opt);
                   }});
  cases.push_back({"detection_head", [](std::uint64_t seed) {
                     Rng rng(seed);
                     HeadConfig hc{8, 2, 1, 1, 2, 8};
                     ParameterSet params;
                     DetectionHead head(hc, rng, params);
                     FeaturePyramid f;
                     f[0] = random_tensor({8, 2, 2}, rng);
                     f[1] = random_tensor({8, 1, 1}, rng);
                     f[2] = random_tensor({8, 1, 1}, rng);
                     auto inputs = params.tensors();
                     for (auto& t : pyramid_tensors(f)) inputs.push_back(t);
                     Tensor rl = random_tensor({2, kNumClasses}, rng), rb = random_tensor({2, 4}, rng);
                     return grad_check(
                         [&] {
                           const auto [det, z] = head.forward(f);
                           return add(sum(mul(det.log_probs, rl)), sum(mul(det.boxes, rb)));
                         },
                         inputs);
                   }});
  cases.push_back({"video_classifier", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ParameterSet params;
                     VideoClassifier cls(6, rng, params);
                     LongRangeFeature z;
                     z.tokens = random_tensor({7, 6}, rng);
                     auto inputs = params.tensors();
                     inputs.push_back(z.tokens);
                     const LesionClass label = seed % 2 ? LesionClass::malignant : LesionClass::benign;
                     return grad_check([&] { return video_class_loss(cls(z), label); }, inputs);
                   }});
  cases.push_back({"detection_loss", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = 4;
                     Tensor inputs[] = {random_tensor({n, kNumClasses}, rng), random_tensor({n, 4}, rng, 0.5)};
                     FrameTargets targets;
                     std::uniform_real_distribution<double> c(0.3, 0.7), s(0.15, 0.4);
                     for (int g = 0; g < 2; ++g) {
                       targets.boxes.push_back({c(rng), c(rng), s(rng), s(rng)});
                       targets.classes.push_back(static_cast<std::size_t>(g));
                     }
                     LossWeights w;
                     auto make = [&] {
                       DetectionSet d;
                       d.logits = inputs[0];
                       d.log_probs = log_softmax(inputs[0], 1);
                       d.boxes = sigmoid(inputs[1]);
                       return d;
                     };
                     MatchResult match;
                     {
                       NoGradGuard g;
                       match = hungarian_match(matching_cost(make(), targets, w));
                     }
                     return grad_check([&] { return detection_loss(make(), targets, match, w).total; }, inputs);
                   }});
  return cases;
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = build();
  return cases;
}

}  // namespace cva::test
