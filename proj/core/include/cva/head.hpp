#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cva/backbone.hpp"
#include "cva/params.hpp"
#include "cva/tensor.hpp"

namespace cva {

/// Query classes: the two lesion types plus the set-prediction "no object".
inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::size_t kNoObject = 2;
inline constexpr std::size_t kVideoClasses = 2;

struct HeadConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t queries = 10;
  std::size_t ffn_dim = 128;
};

/// Per-query outputs for one frame.
struct DetectionSet {
  Tensor logits;     // [N x 3]
  Tensor log_probs;  // [N x 3]
  Tensor boxes;      // [N x 4] as (cx, cy, w, h) in [0, 1]

  std::size_t size() const { return logits.dim(0); }
  /// Softmax probabilities of query q.
  std::array<double, kNumClasses> probabilities(std::size_t q) const;
};

/// Encoder memory followed by the decoded query slots.
struct LongRangeFeature {
  Tensor tokens;  // [(sum_i h_i*w_i + N) x d]
  std::size_t memory_tokens = 0;
};

/// Multi-head scaled dot-product attention with input/output projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng, ParameterSet& params,
                     const std::string& prefix);
  Tensor operator()(const Tensor& queries, const Tensor& keys_values, std::string_view site) const;

 private:
  std::size_t heads_ = 1;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

/// Dense multi-scale transformer over the flattened pyramid plus a learned
/// query decoder. Classes come from a linear layer, boxes from a two-layer
/// perceptron added to a learned per-query reference and squashed by a sigmoid.
class DetectionHead {
 public:
  DetectionHead(const HeadConfig& config, Rng& rng, ParameterSet& params,
                const std::string& prefix = "head.");

  std::pair<DetectionSet, LongRangeFeature> forward(const FeaturePyramid& features) const;
  const HeadConfig& config() const { return config_; }

  /// Fixed 2-D sine/cosine encoding for an h x w grid, [h*w x d].
  static Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d);

 private:
  struct Norm {
    Tensor gain, bias;
  };
  struct FeedForward {
    Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    MultiHeadAttention attn;
    Norm norm1, norm2;
    FeedForward ffn;
  };
  struct DecoderLayer {
    MultiHeadAttention self_attn, cross_attn;
    Norm norm1, norm2, norm3;
    FeedForward ffn;
  };

  Tensor feed_forward(const FeedForward& f, const Tensor& x) const;

  HeadConfig config_;
  Tensor level_embed_;  // [3 x d]
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Tensor query_embed_;  // [N x d]
  Tensor query_ref_;    // [N x 4], pre-sigmoid reference boxes
  Tensor class_w_, class_b_;
  Tensor box_w1_, box_b1_, box_w2_, box_b2_;
};

struct VideoPrediction {
  Tensor log_probs;  // [1 x 2]
  std::array<double, kVideoClasses> probabilities() const;
};

/// Video-level benign/malignant classifier: mean-pool Z, one linear layer,
/// softmax over two classes.
class VideoClassifier {
 public:
  VideoClassifier(std::size_t d_model, Rng& rng, ParameterSet& params,
                  const std::string& prefix = "video_cls.");
  VideoPrediction operator()(const LongRangeFeature& z) const;

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [d x 2]
  Tensor bias_;    // [2]
};

}  // namespace cva
