#pragma once

#include <array>
#include <functional>
#include <string>
#include <string_view>

#include "cva/backbone.hpp"
#include "cva/params.hpp"
#include "cva/tensor.hpp"

namespace cva {

/// Per-position linear map over channels (a 1x1 convolution), c -> c.
struct ChannelProjection {
  Tensor weight;  // [c x c]
  Tensor bias;    // [c]

  Tensor operator()(const Tensor& x) const;
  static ChannelProjection identity(std::size_t channels);
  static ChannelProjection random(std::size_t channels, Rng& rng);
};

/// Which tensors form the inter-video similarity matrix.
enum class InterSimilarity {
  /// softmax(R(G)^T . R(L~)), values from L^ (the closed-form fusion rule).
  equation,
  /// softmax(R(L^)^T . R(L~)), values from the unprojected L (the prose
  /// description of the block); G does not enter.
  text,
};

struct FusionOptions {
  InterSimilarity similarity = InterSimilarity::equation;
  /// Add the block input back onto its output.
  bool residual = false;
  /// Divide similarities by sqrt(c) before the softmax.
  bool scale_similarity = false;
};

struct InterFusionWeights {
  std::array<ChannelProjection, kPyramidLevels> hat;    // value projection
  std::array<ChannelProjection, kPyramidLevels> tilde;  // similarity projection

  static InterFusionWeights create(std::size_t channels, Rng& rng, ParameterSet& params,
                                   const std::string& prefix = "inter.");
};

struct IntraFusionWeights {
  std::array<ChannelProjection, kPyramidLevels> prev;
  std::array<ChannelProjection, kPyramidLevels> cur;
  std::array<ChannelProjection, kPyramidLevels> next;

  static IntraFusionWeights create(std::size_t channels, Rng& rng, ParameterSet& params,
                                   const std::string& prefix = "intra.");
};

/// One inter-video attention block on a single level.
///
/// With L, G of shape c x h x w and R(.) the c x hw flattening:
///   A = softmax_rows( R(G)^T . R(L~) )         (hw x hw)
///   P = reshape( R(L^) . A^T, [c, h, w] )
/// so output position p is the A[p, :]-weighted average of L^ over positions.
Tensor inter_fuse_level(const Tensor& local, const Tensor& global, const ChannelProjection& hat,
                        const ChannelProjection& tilde, const FusionOptions& options = {});

/// Level-wise inter fusion with level-specific weights.
FeaturePyramid inter_fuse(const FeaturePyramid& local, const FeaturePyramid& global,
                          const InterFusionWeights& weights, const FusionOptions& options = {});

/// One intra-video attention block on a single level:
///   B = softmax_rows( R(P^_k)^T . R(P^_{k+1}) )
///   Q = reshape( R(P^_{k-1}) . B^T, [c, h, w] )
Tensor intra_fuse_level(const Tensor& prev, const Tensor& cur, const Tensor& next,
                        const ChannelProjection& prev_proj, const ChannelProjection& cur_proj,
                        const ChannelProjection& next_proj, const FusionOptions& options = {});

FeaturePyramid intra_fuse(const FeaturePyramid& prev, const FeaturePyramid& cur,
                          const FeaturePyramid& next, const IntraFusionWeights& weights,
                          const FusionOptions& options = {});

/// Called with every attention matrix (rows = queries) right after its softmax.
/// `site` names the producer, e.g. "inter.level1". Thread-local; pass an empty
/// function to uninstall.
using AttentionObserver = std::function<void(std::string_view site, const Tensor& attention)>;
void set_attention_observer(AttentionObserver observer);

/// Row-sum check shared by every attention site. Runs when debug checks are on
/// and forwards to the observer if one is installed.
void check_attention(std::string_view site, const Tensor& attention);

}  // namespace cva
