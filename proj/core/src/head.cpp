#include "cva/head.hpp"

#include <cmath>
#include <numbers>

#include "cva/fusion.hpp"
#include "cva/ops.hpp"

namespace cva {

namespace {

Tensor xavier(std::size_t din, std::size_t dout, Rng& rng) {
  return normal_tensor({din, dout}, std::sqrt(2.0 / static_cast<double>(din + dout)), rng);
}

std::array<double, kNumClasses> row_softmax(std::span<const double> logits) {
  std::array<double, kNumClasses> p{};
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double s = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) s += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

std::array<double, kNumClasses> DetectionSet::probabilities(std::size_t q) const {
  return row_softmax(logits.data().subspan(q * kNumClasses, kNumClasses));
}

std::array<double, kVideoClasses> VideoPrediction::probabilities() const {
  return {std::exp(log_probs.data()[0]), std::exp(log_probs.data()[1])};
}

MultiHeadAttention::MultiHeadAttention(std::size_t d, std::size_t heads, Rng& rng,
                                       ParameterSet& params, const std::string& prefix)
    : heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention: d_model " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  wq_ = params.add(prefix + "q.weight", xavier(d, d, rng));
  bq_ = params.add(prefix + "q.bias", Tensor({d}));
  wk_ = params.add(prefix + "k.weight", xavier(d, d, rng));
  bk_ = params.add(prefix + "k.bias", Tensor({d}));
  wv_ = params.add(prefix + "v.weight", xavier(d, d, rng));
  bv_ = params.add(prefix + "v.bias", Tensor({d}));
  wo_ = params.add(prefix + "out.weight", xavier(d, d, rng));
  bo_ = params.add(prefix + "out.bias", Tensor({d}));
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys_values,
                                      std::string_view site) const {
  const std::size_t d = wq_.dim(0), dh = d / heads_;
  const Tensor q = linear(queries, wq_, bq_);
  const Tensor k = linear(keys_values, wk_, bk_);
  const Tensor v = linear(keys_values, wv_, bv_);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = heads_ == 1 ? q : slice_cols(q, h * dh, dh);
    const Tensor kh = heads_ == 1 ? k : slice_cols(k, h * dh, dh);
    const Tensor vh = heads_ == 1 ? v : slice_cols(v, h * dh, dh);
    const Tensor attention = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    check_attention(site, attention);
    outs.push_back(matmul(attention, vh));
  }
  const Tensor merged = heads_ == 1 ? outs.front() : concat_cols(outs);
  return linear(merged, wo_, bo_);
}

Tensor DetectionHead::positional_encoding(std::size_t h, std::size_t w, std::size_t d) {
  if (d % 4 != 0) throw std::invalid_argument("positional encoding needs d divisible by 4");
  const std::size_t half = d / 2, freqs = half / 2;
  std::vector<double> pe(h * w * d);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double yn = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      const double xn = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      double* row = pe.data() + (y * w + x) * d;
      for (std::size_t i = 0; i < freqs; ++i) {
        const double f = std::numbers::pi *
                         std::pow(2.0, 4.0 * static_cast<double>(i) / static_cast<double>(freqs));
        row[2 * i] = std::sin(f * yn);
        row[2 * i + 1] = std::cos(f * yn);
        row[half + 2 * i] = std::sin(f * xn);
        row[half + 2 * i + 1] = std::cos(f * xn);
      }
    }
  }
  return Tensor({h * w, d}, std::move(pe));
}

DetectionHead::DetectionHead(const HeadConfig& config, Rng& rng, ParameterSet& params,
                             const std::string& prefix)
    : config_(config) {
  const std::size_t d = config.d_model, f = config.ffn_dim, n = config.queries;
  if (d == 0 || f == 0 || n == 0) throw std::invalid_argument("head: invalid configuration");
  auto norm = [&](const std::string& name) {
    return Norm{params.add(name + ".gain", Tensor({d}, 1.0)), params.add(name + ".bias", Tensor({d}))};
  };
  auto ffn = [&](const std::string& name) {
    return FeedForward{params.add(name + ".w1", xavier(d, f, rng)), params.add(name + ".b1", Tensor({f})),
                       params.add(name + ".w2", xavier(f, d, rng)), params.add(name + ".b2", Tensor({d}))};
  };
  level_embed_ = params.add(prefix + "level_embed", normal_tensor({kPyramidLevels, d}, 0.1, rng));
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    const std::string p = prefix + "encoder" + std::to_string(l) + ".";
    EncoderLayer layer;
    layer.attn = MultiHeadAttention(d, config.heads, rng, params, p + "attn.");
    layer.norm1 = norm(p + "norm1");
    layer.ffn = ffn(p + "ffn");
    layer.norm2 = norm(p + "norm2");
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config.decoder_layers; ++l) {
    const std::string p = prefix + "decoder" + std::to_string(l) + ".";
    DecoderLayer layer;
    layer.self_attn = MultiHeadAttention(d, config.heads, rng, params, p + "self_attn.");
    layer.norm1 = norm(p + "norm1");
    layer.cross_attn = MultiHeadAttention(d, config.heads, rng, params, p + "cross_attn.");
    layer.norm2 = norm(p + "norm2");
    layer.ffn = ffn(p + "ffn");
    layer.norm3 = norm(p + "norm3");
    decoder_.push_back(std::move(layer));
  }
  query_embed_ = params.add(prefix + "query_embed", normal_tensor({n, d}, 1.0, rng));
  // Reference boxes start on a grid of centers with a modest size.
  Tensor ref({n, 4});
  const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  for (std::size_t q = 0; q < n; ++q) {
    const double cx = (static_cast<double>(q % grid) + 0.5) / static_cast<double>(grid);
    const double cy = (static_cast<double>(q / grid) + 0.5) / static_cast<double>(grid);
    auto r = ref.mutable_data().subspan(q * 4, 4);
    r[0] = logit(cx);
    r[1] = logit(cy);
    r[2] = logit(0.25);
    r[3] = logit(0.25);
  }
  query_ref_ = params.add(prefix + "query_ref", ref);
  class_w_ = params.add(prefix + "class.weight", xavier(d, kNumClasses, rng));
  class_b_ = params.add(prefix + "class.bias", Tensor({kNumClasses}));
  box_w1_ = params.add(prefix + "box.w1", xavier(d, d, rng));
  box_b1_ = params.add(prefix + "box.b1", Tensor({d}));
  box_w2_ = params.add(prefix + "box.w2", scale(xavier(d, 4, rng), 0.1).detach());
  box_b2_ = params.add(prefix + "box.b2", Tensor({4}));
}

Tensor DetectionHead::feed_forward(const FeedForward& f, const Tensor& x) const {
  return linear(relu(linear(x, f.w1, f.b1)), f.w2, f.b2);
}

std::pair<DetectionSet, LongRangeFeature> DetectionHead::forward(const FeaturePyramid& features) const {
  const std::size_t d = config_.d_model;
  std::vector<Tensor> tokens;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const Tensor& level = features[i];
    if (level.rank() != 3 || level.dim(0) != d) {
      throw DimensionError("head: level " + std::to_string(i + 1) + " has shape " +
                           shape_str(level.shape()) + ", expected channel width " +
                           std::to_string(d));
    }
    const std::size_t h = level.dim(1), w = level.dim(2);
    Tensor t = transpose(reshape(level, {d, h * w}));  // [hw x d]
    t = add(t, positional_encoding(h, w, d));
    t = add_bias(t, reshape(slice_rows(level_embed_, i, 1), {d}));
    tokens.push_back(t);
  }
  Tensor memory = concat_rows(tokens);
  for (const auto& layer : encoder_) {
    memory = layer_norm(add(memory, layer.attn(memory, memory, "head.encoder")), layer.norm1.gain,
                        layer.norm1.bias);
    memory = layer_norm(add(memory, feed_forward(layer.ffn, memory)), layer.norm2.gain,
                        layer.norm2.bias);
  }
  Tensor tgt = query_embed_;
  for (const auto& layer : decoder_) {
    tgt = layer_norm(add(tgt, layer.self_attn(tgt, tgt, "head.decoder.self")), layer.norm1.gain,
                     layer.norm1.bias);
    tgt = layer_norm(add(tgt, layer.cross_attn(tgt, memory, "head.decoder.cross")),
                     layer.norm2.gain, layer.norm2.bias);
    tgt = layer_norm(add(tgt, feed_forward(layer.ffn, tgt)), layer.norm3.gain, layer.norm3.bias);
  }
  DetectionSet det;
  det.logits = linear(tgt, class_w_, class_b_);
  det.log_probs = log_softmax(det.logits, 1);
  const Tensor box_hidden = relu(linear(tgt, box_w1_, box_b1_));
  det.boxes = sigmoid(add(linear(box_hidden, box_w2_, box_b2_), query_ref_));

  LongRangeFeature z;
  z.memory_tokens = memory.dim(0);
  const std::array<Tensor, 2> parts{memory, tgt};
  z.tokens = concat_rows(parts);
  return {std::move(det), std::move(z)};
}

VideoClassifier::VideoClassifier(std::size_t d, Rng& rng, ParameterSet& params,
                                 const std::string& prefix) {
  weight_ = params.add(prefix + "weight", xavier(d, kVideoClasses, rng));
  bias_ = params.add(prefix + "bias", Tensor({kVideoClasses}));
}

VideoPrediction VideoClassifier::operator()(const LongRangeFeature& z) const {
  const Tensor pooled = reshape(mean_rows(z.tokens), {1, z.tokens.dim(1)});
  return {log_softmax(linear(pooled, weight_, bias_), 1)};
}

}  // namespace cva
