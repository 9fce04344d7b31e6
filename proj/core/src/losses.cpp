#include "cva/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cva/ops.hpp"

namespace cva {

void LossWeights::validate() const {
  if (cls < 0.0 || l1 < 0.0 || giou < 0.0 || video < 0.0 || no_object < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

namespace {

Box pred_corners(std::span<const double> row) {
  return to_corners(CenterBox{row[0], row[1], row[2], row[3]});
}

void check_targets(const DetectionSet& pred, const FrameTargets& targets) {
  if (targets.boxes.size() != targets.classes.size()) {
    throw std::invalid_argument("frame targets: box and class counts differ");
  }
  for (auto c : targets.classes) {
    if (c >= kNoObject) throw std::invalid_argument("frame targets: class index out of range");
  }
  if (pred.boxes.rank() != 2 || pred.boxes.dim(1) != 4 || pred.log_probs.dim(1) != kNumClasses) {
    throw DimensionError("detection set has malformed tensors");
  }
}

}  // namespace

CostMatrix matching_cost(const DetectionSet& pred, const FrameTargets& targets,
                         const LossWeights& weights) {
  check_targets(pred, targets);
  const std::size_t n = pred.size();
  CostMatrix cost(targets.boxes.size(), n);
  const auto lp = pred.log_probs.data();
  const auto bx = pred.boxes.data();
  for (std::size_t g = 0; g < targets.boxes.size(); ++g) {
    const CenterBox& t = targets.boxes[g];
    const Box tc = to_corners(t);
    for (std::size_t q = 0; q < n; ++q) {
      const auto row = bx.subspan(q * 4, 4);
      const double l1 = std::abs(row[0] - t.cx) + std::abs(row[1] - t.cy) +
                        std::abs(row[2] - t.w) + std::abs(row[3] - t.h);
      const Box pc = pred_corners(row);
      const double g_iou = pc.valid() ? giou(pc, tc) : -1.0;
      cost.at(g, q) = weights.cls * -lp[q * kNumClasses + targets.classes[g]] + weights.l1 * l1 +
                      weights.giou * (1.0 - g_iou);
    }
  }
  return cost;
}

Tensor giou_loss(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 4 || pred.shape() != target.shape()) {
    throw DimensionError("giou_loss: expected matching [M x 4] inputs, got " +
                         shape_str(pred.shape()) + " and " + shape_str(target.shape()));
  }
  const std::size_t m = pred.dim(0);
  Storage out(m);
  for (std::size_t r = 0; r < m; ++r) {
    const Box p = pred_corners(pred.data().subspan(r * 4, 4));
    const Box t = pred_corners(target.data().subspan(r * 4, 4));
    out[r] = 1.0 - giou(p, t);
  }
  auto pi = pred.impl();
  auto ti = target.impl();
  return detail::make_result("giou_loss", {m}, std::move(out), {&pred}, [pi, ti, m](std::span<const double> g) {
    auto& gp = pi->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double* pr = pi->data.data() + r * 4;
      const double* tr = ti->data.data() + r * 4;
      const double px1 = pr[0] - 0.5 * pr[2], px2 = pr[0] + 0.5 * pr[2];
      const double py1 = pr[1] - 0.5 * pr[3], py2 = pr[1] + 0.5 * pr[3];
      const double tx1 = tr[0] - 0.5 * tr[2], tx2 = tr[0] + 0.5 * tr[2];
      const double ty1 = tr[1] - 0.5 * tr[3], ty2 = tr[1] + 0.5 * tr[3];
      const double iw = std::max(0.0, std::min(px2, tx2) - std::max(px1, tx1));
      const double ih = std::max(0.0, std::min(py2, ty2) - std::max(py1, ty1));
      const double inter = iw * ih;
      const double pw = px2 - px1, ph = py2 - py1;
      const double uni = pw * ph + (tx2 - tx1) * (ty2 - ty1) - inter;
      const double cw = std::max(px2, tx2) - std::min(px1, tx1);
      const double ch = std::max(py2, ty2) - std::min(py1, ty1);
      const double enc = cw * ch;
      // loss = 2 - I/U - U/C
      const double d_u = inter / (uni * uni) - 1.0 / enc;
      const double d_i = -1.0 / uni - d_u;
      const double d_c = uni / (enc * enc);
      const double gr = g[r];
      double g_x1 = 0, g_x2 = 0, g_y1 = 0, g_y2 = 0;
      if (iw > 0.0 && ih > 0.0) {
        if (px2 < tx2) g_x2 += d_i * ih;
        if (px1 > tx1) g_x1 -= d_i * ih;
        if (py2 < ty2) g_y2 += d_i * iw;
        if (py1 > ty1) g_y1 -= d_i * iw;
      }
      g_x2 += d_u * ph;
      g_x1 -= d_u * ph;
      g_y2 += d_u * pw;
      g_y1 -= d_u * pw;
      if (px2 > tx2) g_x2 += d_c * ch;
      if (px1 < tx1) g_x1 -= d_c * ch;
      if (py2 > ty2) g_y2 += d_c * cw;
      if (py1 < ty1) g_y1 -= d_c * cw;
      double* out_g = gp.data() + r * 4;
      out_g[0] += gr * (g_x1 + g_x2);
      out_g[1] += gr * (g_y1 + g_y2);
      out_g[2] += gr * 0.5 * (g_x2 - g_x1);
      out_g[3] += gr * 0.5 * (g_y2 - g_y1);
    }
  });
}

DetectionLoss detection_loss(const DetectionSet& pred, const FrameTargets& targets,
                             const MatchResult& match, const LossWeights& weights) {
  weights.validate();
  check_targets(pred, targets);
  if (match.assignment.size() != targets.boxes.size()) {
    throw std::invalid_argument("detection_loss: match does not cover every ground truth");
  }
  const std::size_t n = pred.size();
  const auto q2g = match.query_to_gt(n);

  std::vector<std::size_t> target_class(n, kNoObject);
  std::vector<double> w(n, weights.no_object);
  for (std::size_t q = 0; q < n; ++q) {
    if (q2g[q] >= 0) {
      target_class[q] = targets.classes[static_cast<std::size_t>(q2g[q])];
      w[q] = 1.0;
    }
  }
  double wsum = 0.0;
  for (double v : w) wsum += v;
  if (wsum > 0.0) {
    for (auto& v : w) v /= wsum;
  }
  DetectionLoss out;
  Tensor cls = scale(sum(mul(pick(pred.log_probs, target_class), Tensor({n}, w))), -1.0);
  out.classification = cls.item();
  Tensor total = scale(cls, weights.cls);

  const std::size_t m = targets.boxes.size();
  if (m > 0) {
    std::vector<Tensor> rows;
    std::vector<double> tgt;
    for (std::size_t g = 0; g < m; ++g) {
      rows.push_back(slice_rows(pred.boxes, match.assignment[g], 1));
      const auto& t = targets.boxes[g];
      tgt.insert(tgt.end(), {t.cx, t.cy, t.w, t.h});
    }
    const Tensor matched = concat_rows(rows);
    const Tensor target({m, 4}, std::move(tgt));
    const double inv_m = 1.0 / static_cast<double>(m);
    Tensor l1 = scale(sum(abs(sub(matched, target))), inv_m);
    Tensor g = scale(sum(giou_loss(matched, target)), inv_m);
    out.l1 = l1.item();
    out.giou = g.item();
    total = add(total, add(scale(l1, weights.l1), scale(g, weights.giou)));
  }
  out.total = total;
  return out;
}

Tensor video_class_loss(const VideoPrediction& pred, LesionClass label) {
  const std::size_t idx = static_cast<std::size_t>(label);
  return scale(sum(pick(pred.log_probs, std::span<const std::size_t>(&idx, 1))), -1.0);
}

}  // namespace cva
