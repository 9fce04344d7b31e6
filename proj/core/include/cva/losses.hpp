#pragma once

#include <cstddef>
#include <vector>

#include "cva/box.hpp"
#include "cva/head.hpp"
#include "cva/matching.hpp"
#include "cva/tensor.hpp"
#include "cva/video.hpp"

namespace cva {

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double video = 1.0;
  /// Relative weight of the no-object class in the classification NLL.
  double no_object = 0.1;

  void validate() const;
};

/// Targets for one frame in normalized center form.
struct FrameTargets {
  std::vector<CenterBox> boxes;
  std::vector<std::size_t> classes;  // 0 benign, 1 malignant
};

/// Pairwise cost used for matching: the same three terms as the loss,
/// cls * -log p(class) + l1 * |box - gt|_1 + giou * (1 - gIoU).
CostMatrix matching_cost(const DetectionSet& pred, const FrameTargets& targets,
                         const LossWeights& weights);

struct DetectionLoss {
  Tensor total;
  double classification = 0.0;  // unweighted components
  double l1 = 0.0;
  double giou = 0.0;
};

/// Set-prediction loss for one frame:
///   cls  * sum_q w_q * -log p_q(t_q) / sum_q w_q
///   + l1   * sum_matched |b_q - b_g|_1 / M
///   + giou * sum_matched (1 - gIoU(b_q, b_g)) / M
/// with t_q the matched class or no-object and w_q = 1 (matched) or
/// `no_object` (unmatched).
DetectionLoss detection_loss(const DetectionSet& pred, const FrameTargets& targets,
                             const MatchResult& match, const LossWeights& weights);

/// Row-wise 1 - gIoU between predicted boxes [M x 4] and constant targets
/// [M x 4], both (cx, cy, w, h). Differentiable in `pred`.
Tensor giou_loss(const Tensor& pred, const Tensor& target);

/// -log p(label) of the video-level classifier.
Tensor video_class_loss(const VideoPrediction& pred, LesionClass label);

}  // namespace cva
