#include "cva/model.hpp"

#include <stdexcept>

namespace cva {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::basic: return "basic";
    case Variant::basic_inter: return "basic+inter";
    case Variant::basic_intra: return "basic+intra";
    case Variant::full: return "full";
  }
  throw std::invalid_argument("unknown variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "basic") return Variant::basic;
  if (s == "basic+inter") return Variant::basic_inter;
  if (s == "basic+intra") return Variant::basic_intra;
  if (s == "full") return Variant::full;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

bool uses_inter(Variant v) { return v == Variant::basic_inter || v == Variant::full; }
bool uses_intra(Variant v) { return v == Variant::basic_intra || v == Variant::full; }

void ModelConfig::validate() const {
  if (backbone.d_model != head.d_model) {
    throw std::invalid_argument("backbone d_model " + std::to_string(backbone.d_model) +
                                " differs from head d_model " + std::to_string(head.d_model));
  }
  if (head.d_model == 0 || head.heads == 0 || head.d_model % head.heads != 0) {
    throw std::invalid_argument("d_model must be a positive multiple of the head count");
  }
  if (head.d_model % 4 != 0) throw std::invalid_argument("d_model must be divisible by 4");
  if (head.queries == 0) throw std::invalid_argument("need at least one query");
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

CvaNet::CvaNet(const ModelConfig& config, std::uint64_t seed)
    : config_(checked(config)),
      rng_(seed),
      backbone_(config_.backbone, rng_, params_),
      inter_(InterFusionWeights::create(config_.backbone.d_model, rng_, params_)),
      intra_(IntraFusionWeights::create(config_.backbone.d_model, rng_, params_)),
      head_(config_.head, rng_, params_),
      video_cls_(config_.head.d_model, rng_, params_) {}

std::vector<std::string> CvaNet::video_classifier_parameters() const {
  std::vector<std::string> names;
  for (const auto& item : params_.items()) {
    if (item.name.starts_with("video_cls.")) names.push_back(item.name);
  }
  return names;
}

ClipForward CvaNet::forward(std::span<const Image, 3> ordered,
                            std::span<const Image, 3> shuffled) const {
  ClipForward out;
  const bool inter = uses_inter(config_.variant);
  for (std::size_t j = 0; j < 3; ++j) {
    out.local[j] = backbone_.extract(ordered[j]);
    if (inter) {
      out.global[j] = backbone_.extract(shuffled[j]);
      out.inter[j] = inter_fuse(out.local[j], out.global[j], inter_, config_.fusion);
    } else {
      out.inter[j] = out.local[j];
    }
  }
  if (uses_intra(config_.variant)) {
    out.intra = intra_fuse(out.inter[0], out.inter[1], out.inter[2], intra_, config_.fusion);
  } else {
    out.intra = out.inter[1];
  }
  auto [det, z] = head_.forward(out.intra);
  out.detections = std::move(det);
  out.z = std::move(z);
  if (config_.use_video_classifier) out.video = video_cls_(out.z);
  return out;
}

}  // namespace cva
