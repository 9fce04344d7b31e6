#include "cva/fusion.hpp"

#include <cmath>

#include "cva/ops.hpp"

namespace cva {

namespace {

thread_local AttentionObserver t_observer;

const char* kLevelNames[kPyramidLevels] = {"level1", "level2", "level3"};

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": feature maps must share one c x h x w shape, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}); }

Tensor attend(std::string_view site, const Tensor& query_side, const Tensor& key_side,
              const Tensor& values, const Shape& out_shape, const FusionOptions& options) {
  Tensor sim = matmul(transpose(query_side), key_side);  // hw x hw
  if (options.scale_similarity) {
    sim = scale(sim, 1.0 / std::sqrt(static_cast<double>(query_side.dim(0))));
  }
  Tensor attention = softmax(sim, 1);
  check_attention(site, attention);
  return reshape(matmul(values, transpose(attention)), out_shape);
}

}  // namespace

void set_attention_observer(AttentionObserver observer) { t_observer = std::move(observer); }

void check_attention(std::string_view site, const Tensor& attention) {
  if (debug_checks()) {
    const std::size_t rows = attention.dim(0), cols = attention.dim(1);
    const auto a = attention.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += a[r * cols + c];
      if (std::abs(s - 1.0) > 1e-9) {
        throw NumericError("attention rows at " + std::string(site) + " sum to " +
                           std::to_string(s));
      }
    }
  }
  if (t_observer) t_observer(site, attention);
}

Tensor ChannelProjection::operator()(const Tensor& x) const { return channel_map(x, weight, bias); }

ChannelProjection ChannelProjection::identity(std::size_t channels) {
  ChannelProjection p{Tensor({channels, channels}), Tensor({channels})};
  for (std::size_t i = 0; i < channels; ++i) p.weight.mutable_data()[i * channels + i] = 1.0;
  return p;
}

ChannelProjection ChannelProjection::random(std::size_t channels, Rng& rng) {
  return {normal_tensor({channels, channels}, 1.0 / std::sqrt(static_cast<double>(channels)), rng),
          Tensor({channels})};
}

InterFusionWeights InterFusionWeights::create(std::size_t channels, Rng& rng, ParameterSet& params,
                                              const std::string& prefix) {
  InterFusionWeights w;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    for (auto [proj, tag] : {std::pair{&w.hat[i], "hat"}, std::pair{&w.tilde[i], "tilde"}}) {
      *proj = ChannelProjection::random(channels, rng);
      const std::string base = prefix + kLevelNames[i] + "." + tag;
      proj->weight = params.add(base + ".weight", proj->weight);
      proj->bias = params.add(base + ".bias", proj->bias);
    }
  }
  return w;
}

IntraFusionWeights IntraFusionWeights::create(std::size_t channels, Rng& rng, ParameterSet& params,
                                              const std::string& prefix) {
  IntraFusionWeights w;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    for (auto [proj, tag] :
         {std::pair{&w.prev[i], "prev"}, std::pair{&w.cur[i], "cur"}, std::pair{&w.next[i], "next"}}) {
      *proj = ChannelProjection::random(channels, rng);
      const std::string base = prefix + kLevelNames[i] + "." + tag;
      proj->weight = params.add(base + ".weight", proj->weight);
      proj->bias = params.add(base + ".bias", proj->bias);
    }
  }
  return w;
}

namespace {

Tensor inter_level_impl(std::string_view site, const Tensor& local, const Tensor& global,
                        const ChannelProjection& hat, const ChannelProjection& tilde,
                        const FusionOptions& options) {
  require_same("inter_fuse_level", local, global);
  Tensor out;
  if (options.similarity == InterSimilarity::equation) {
    out = attend(site, flatten(global), flatten(tilde(local)), flatten(hat(local)), local.shape(),
                 options);
  } else {
    out = attend(site, flatten(hat(local)), flatten(tilde(local)), flatten(local), local.shape(),
                 options);
  }
  return options.residual ? add(out, local) : out;
}

Tensor intra_level_impl(std::string_view site, const Tensor& prev, const Tensor& cur,
                        const Tensor& next, const ChannelProjection& prev_proj,
                        const ChannelProjection& cur_proj, const ChannelProjection& next_proj,
                        const FusionOptions& options) {
  require_same("intra_fuse_level", prev, cur);
  require_same("intra_fuse_level", cur, next);
  Tensor out = attend(site, flatten(cur_proj(cur)), flatten(next_proj(next)),
                      flatten(prev_proj(prev)), cur.shape(), options);
  return options.residual ? add(out, cur) : out;
}

}  // namespace

Tensor inter_fuse_level(const Tensor& local, const Tensor& global, const ChannelProjection& hat,
                        const ChannelProjection& tilde, const FusionOptions& options) {
  return inter_level_impl("inter", local, global, hat, tilde, options);
}

FeaturePyramid inter_fuse(const FeaturePyramid& local, const FeaturePyramid& global,
                          const InterFusionWeights& weights, const FusionOptions& options) {
  FeaturePyramid out;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    out[i] = inter_level_impl(std::string("inter.") + kLevelNames[i], local[i], global[i],
                              weights.hat[i], weights.tilde[i], options);
  }
  return out;
}

Tensor intra_fuse_level(const Tensor& prev, const Tensor& cur, const Tensor& next,
                        const ChannelProjection& prev_proj, const ChannelProjection& cur_proj,
                        const ChannelProjection& next_proj, const FusionOptions& options) {
  return intra_level_impl("intra", prev, cur, next, prev_proj, cur_proj, next_proj, options);
}

FeaturePyramid intra_fuse(const FeaturePyramid& prev, const FeaturePyramid& cur,
                          const FeaturePyramid& next, const IntraFusionWeights& weights,
                          const FusionOptions& options) {
  FeaturePyramid out;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    out[i] = intra_level_impl(std::string("intra.") + kLevelNames[i], prev[i], cur[i], next[i],
                              weights.prev[i], weights.cur[i], weights.next[i], options);
  }
  return out;
}

}  // namespace cva
