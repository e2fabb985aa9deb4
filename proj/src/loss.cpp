#include "hdet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "hdet/error.hpp"

namespace hdet {

using ad::Shape;
using ad::Var;

void GridSpec::validate() const {
  if (s < 1) throw ValidationError("grid.s must be >= 1");
  if (b < 1) throw ValidationError("grid.b must be >= 1");
  if (n_fine < 1) throw ValidationError("grid.n_fine must be >= 1");
  if (anchors.size() != b)
    throw ValidationError("grid has " + std::to_string(anchors.size()) + " anchors, expected b=" +
                          std::to_string(b));
  for (const auto& a : anchors)
    if (!(a.w > 0.0) || !(a.h > 0.0)) throw ValidationError("grid anchors must be positive");
}

double shape_ratio(double w, double h, const Anchor& a) {
  return std::max({w / a.w, a.w / w, h / a.h, a.h / h});
}

namespace {

double centered_iou(double w, double h, const Anchor& a) {
  const double inter = std::min(w, a.w) * std::min(h, a.h);
  return inter / (w * h + a.w * a.h - inter);
}

Var zero_scalar(const Var& like) { return like.tape().constant({0.0}, Shape{1}); }

void check_head(const Var& v, const Shape& expected, const char* what) {
  if (v.shape() != expected)
    throw ShapeError(std::string(what) + ": expected " + expected.str() + ", got " +
                     v.shape().str());
}

}  // namespace

Assignment assign(const std::vector<LabeledBox>& gt, const GridSpec& grid) {
  struct Claim {
    std::size_t gt;
    double score;
  };
  std::map<std::pair<std::size_t, std::size_t>, Claim> claims;
  Assignment out;
  const auto s = static_cast<double>(grid.s);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const BBox& box = gt[g].box;
    if (!(box.cx >= 0.0 && box.cx <= 1.0 && box.cy >= 0.0 && box.cy <= 1.0))
      throw ValidationError("ground truth " + std::to_string(g) + " center outside [0,1]");
    if (!(box.w > 0.0) || !(box.h > 0.0))
      throw ValidationError("ground truth " + std::to_string(g) + " has non-positive extent");
    const auto col = std::min(static_cast<std::size_t>(std::floor(box.cx * s)), grid.s - 1);
    const auto row = std::min(static_cast<std::size_t>(std::floor(box.cy * s)), grid.s - 1);
    const std::size_t cell = row * grid.s + col;

    std::vector<std::size_t> chosen;
    std::size_t best = 0;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.b; ++j) {
      const double r = shape_ratio(box.w, box.h, grid.anchors[j]);
      if (r < kAnchorRatioLimit) chosen.push_back(j);
      if (r < best_ratio) {
        best_ratio = r;
        best = j;
      }
    }
    if (chosen.empty()) chosen.push_back(best);

    for (std::size_t j : chosen) {
      const double score = centered_iou(box.w, box.h, grid.anchors[j]);
      auto [it, inserted] = claims.try_emplace({cell, j}, Claim{g, score});
      if (inserted) continue;
      ++out.dropped;
      if (score > it->second.score) it->second = Claim{g, score};
    }
  }
  out.obj_target.assign(grid.pairs(), 0.0);
  for (const auto& [key, claim] : claims) {
    out.entries.push_back({key.first, key.second, claim.gt});
    out.obj_target[key.first * grid.b + key.second] = 1.0;
  }
  return out;
}

std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

Var classification_loss(const Var& class_logits, std::span<const std::size_t> target_classes,
                        const Assignment& assignment, const Taxonomy& taxonomy,
                        const HierLossParams& params) {
  params.validate();
  const Shape& shape = class_logits.shape();
  if (shape.rank() != 3) throw ShapeError("classification_loss: logits must be [s*s, b, n_fine]");
  const std::size_t b = shape[1], nf = shape[2];
  if (nf != taxonomy.n_fine())
    throw ShapeError("classification_loss: " + std::to_string(nf) + " logits per anchor but " +
                     std::to_string(taxonomy.n_fine()) + " fine classes");
  if (target_classes.size() != assignment.entries.size())
    throw ShapeError("classification_loss: one target class per assigned pair required");
  const std::size_t e = assignment.entries.size();
  if (e == 0) return zero_scalar(class_logits);

  std::vector<std::size_t> idx;
  idx.reserve(e * nf);
  std::vector<double> onehot(e * nf, 0.0);
  std::vector<double> weight(e);
  const auto values = class_logits.value();
  for (std::size_t k = 0; k < e; ++k) {
    const auto& pr = assignment.entries[k];
    const std::size_t base = (pr.cell * b + pr.anchor) * nf;
    if (base + nf > values.size())
      throw ShapeError("classification_loss: assignment outside the logit grid");
    for (std::size_t c = 0; c < nf; ++c) idx.push_back(base + c);
    const std::size_t target = target_classes[k];
    if (target >= nf) throw ValidationError("target class " + std::to_string(target) + " >= n_fine");
    onehot[k * nf + target] = 1.0;
    // gate is a constant: argmax carries no gradient
    const std::size_t predicted = argmax(values.subspan(base, nf));
    weight[k] = 1.0 + gamma(taxonomy, params, predicted, target);
  }
  const Var z = ad::gather(class_logits, std::move(idx), Shape{e, nf});
  // -[t log s(z) + (1-t) log(1 - s(z))] = softplus(z) - t z
  const Var bce = ad::softplus(z) - ad::mul_const(z, onehot);
  const Var per_anchor = ad::reduce_sum(bce, {1});
  return ad::sum(ad::mul_const(per_anchor, weight));
}

Var objectness_loss(const Var& obj_logits, const Assignment& assignment) {
  if (obj_logits.numel() != assignment.obj_target.size() || obj_logits.shape().rank() != 2)
    throw ShapeError("objectness_loss: logits " + obj_logits.shape().str() + " vs " +
                     std::to_string(assignment.obj_target.size()) + " targets");
  const Var bce = ad::softplus(obj_logits) - ad::mul_const(obj_logits, assignment.obj_target);
  return ad::sum(bce);
}

BoxVars decode_assigned(const Var& raw_head, const Assignment& assignment,
                        const GridSpec& grid) {
  check_head(raw_head, Shape{grid.cells(), grid.b, grid.fields()}, "decode_assigned");
  const std::size_t e = assignment.entries.size();
  if (e == 0) throw ShapeError("decode_assigned: empty assignment");
  const std::size_t f = grid.fields();
  std::vector<std::size_t> ix, iy, iw, ih;
  std::vector<double> off_x(e), off_y(e), aw4(e), ah4(e);
  const auto s = static_cast<double>(grid.s);
  for (std::size_t k = 0; k < e; ++k) {
    const auto& pr = assignment.entries[k];
    const std::size_t base = (pr.cell * grid.b + pr.anchor) * f;
    ix.push_back(base + head::tx);
    iy.push_back(base + head::ty);
    iw.push_back(base + head::tw);
    ih.push_back(base + head::th);
    off_x[k] = (static_cast<double>(pr.cell % grid.s) - 0.5) / s;
    off_y[k] = (static_cast<double>(pr.cell / grid.s) - 0.5) / s;
    aw4[k] = 4.0 * grid.anchors[pr.anchor].w;
    ah4[k] = 4.0 * grid.anchors[pr.anchor].h;
  }
  ad::Tape& tape = raw_head.tape();
  auto pick = [&](std::vector<std::size_t> v) { return ad::gather(raw_head, std::move(v), Shape{e}); };
  const Var cx = ad::scale(ad::sigmoid(pick(ix)), 2.0 / s) + tape.constant(off_x, Shape{e});
  const Var cy = ad::scale(ad::sigmoid(pick(iy)), 2.0 / s) + tape.constant(off_y, Shape{e});
  const Var w = ad::mul_const(ad::square(ad::sigmoid(pick(iw))), aw4);
  const Var h = ad::mul_const(ad::square(ad::sigmoid(pick(ih))), ah4);
  return {cx, cy, w, h};
}

Var box_loss(const BoxVars& decoded, const std::vector<BBox>& gt_boxes,
             const Assignment& assignment) {
  if (gt_boxes.size() != assignment.entries.size())
    throw ShapeError("box_loss: one target box per assigned pair required");
  if (assignment.entries.empty()) {
    if (decoded.cx.valid()) return zero_scalar(decoded.cx);
    throw ShapeError("box_loss: empty assignment without a tape");
  }
  if (decoded.cx.numel() != gt_boxes.size())
    throw ShapeError("box_loss: prediction/assignment misalignment");
  return ad::sum(ciou_loss_var(decoded.cx, decoded.cy, decoded.w, decoded.h, gt_boxes));
}

LossBreakdown total_loss(const Var& raw_head, const std::vector<LabeledBox>& gt,
                         const GridSpec& grid, const Taxonomy& taxonomy,
                         const HierLossParams& params) {
  params.validate();
  check_head(raw_head, Shape{grid.cells(), grid.b, grid.fields()}, "total_loss");
  LossBreakdown out;
  out.assignment = assign(gt, grid);
  const Assignment& asg = out.assignment;
  const std::size_t f = grid.fields(), nf = grid.n_fine, pairs = grid.pairs();

  std::vector<std::size_t> obj_idx(pairs);
  for (std::size_t p = 0; p < pairs; ++p) obj_idx[p] = p * f + head::tobj;
  const Var obj = objectness_loss(ad::gather(raw_head, std::move(obj_idx), Shape{grid.cells(), grid.b}), asg);

  std::vector<std::size_t> cls_idx(pairs * nf);
  for (std::size_t p = 0; p < pairs; ++p)
    for (std::size_t c = 0; c < nf; ++c) cls_idx[p * nf + c] = p * f + head::cls0 + c;
  const Var logits = ad::gather(raw_head, std::move(cls_idx), Shape{grid.cells(), grid.b, nf});

  std::vector<std::size_t> targets;
  std::vector<BBox> gt_boxes;
  for (const auto& pr : asg.entries) {
    targets.push_back(gt[pr.gt].cls);
    gt_boxes.push_back(gt[pr.gt].box);
  }
  const Var cls = classification_loss(logits, targets, asg, taxonomy, params);
  const Var box = asg.entries.empty() ? zero_scalar(raw_head)
                                      : box_loss(decode_assigned(raw_head, asg, grid), gt_boxes, asg);

  out.total = box + obj + ad::scale(cls, params.effective_alpha());
  out.box_term = box;
  out.obj_term = obj;
  out.cls_term = cls;
  out.box = box.item();
  out.obj = obj.item();
  out.cls = cls.item();
  out.total_value = out.total.item();
  if (!std::isfinite(out.box) || !std::isfinite(out.obj) || !std::isfinite(out.cls) ||
      !std::isfinite(out.total_value))
    throw NumericalError("non-finite loss: box=" + std::to_string(out.box) +
                         " obj=" + std::to_string(out.obj) + " cls=" + std::to_string(out.cls));
  return out;
}

}  // namespace hdet
