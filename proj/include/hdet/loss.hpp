#pragma once

// Training objective of the grid detector.
//
//   total = box + obj + alpha * cls
//
// box: CIoU loss over assigned (cell, anchor) pairs.
// obj: sigmoid cross-entropy of every (cell, anchor) objectness logit against
//      its assignment indicator.
// cls: for every assigned pair, the summed per-class sigmoid cross-entropy
//      against the one-hot target, multiplied by (1 + gamma) where gamma is the
//      coarse-mismatch gate evaluated on the pair's argmax fine class.
//
// Head layout: a var of shape [s*s, b, 5 + n_fine]; the trailing axis holds
// (tx, ty, tw, th, tobj, class logits...). Cell index = row * s + col.

#include <cstddef>
#include <span>
#include <vector>

#include "hdet/autodiff.hpp"
#include "hdet/geometry.hpp"
#include "hdet/taxonomy.hpp"

namespace hdet {

struct Anchor {
  double w = 0.0;
  double h = 0.0;
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

struct GridSpec {
  std::size_t s = 6;
  std::size_t b = 3;
  std::size_t n_fine = 0;
  std::vector<Anchor> anchors;

  std::size_t cells() const { return s * s; }
  std::size_t pairs() const { return s * s * b; }
  std::size_t fields() const { return 5 + n_fine; }
  /// Throws ValidationError.
  void validate() const;
};

namespace head {
inline constexpr std::size_t tx = 0, ty = 1, tw = 2, th = 3, tobj = 4, cls0 = 5;
}

struct AssignedPair {
  std::size_t cell = 0;
  std::size_t anchor = 0;
  std::size_t gt = 0;
  friend bool operator==(const AssignedPair&, const AssignedPair&) = default;
};

struct Assignment {
  /// Sorted by (cell, anchor); each pair appears at most once.
  std::vector<AssignedPair> entries;
  /// 1 on assigned pairs, 0 elsewhere; index = cell * b + anchor.
  std::vector<double> obj_target;
  /// Claims lost to a better-matching ground truth on the same pair.
  std::size_t dropped = 0;
};

/// Shape ratio used for anchor matching: max(w/aw, aw/w, h/ah, ah/h).
double shape_ratio(double w, double h, const Anchor& a);
inline constexpr double kAnchorRatioLimit = 4.0;

/// Maps ground truths to (cell, anchor) pairs. Throws ValidationError when a
/// center lies outside [0,1].
Assignment assign(const std::vector<LabeledBox>& gt, const GridSpec& grid);

/// Index of the largest logit, lowest index on ties.
std::size_t argmax(std::span<const double> logits);

/// Classification term before alpha. `class_logits` has shape
/// [s*s, b, n_fine]; `target_classes[k]` is the fine class of entry k.
ad::Var classification_loss(const ad::Var& class_logits,
                            std::span<const std::size_t> target_classes,
                            const Assignment& assignment, const Taxonomy& taxonomy,
                            const HierLossParams& params);

/// Sum of objectness cross-entropies over all pairs; `obj_logits` is [s*s, b].
ad::Var objectness_loss(const ad::Var& obj_logits, const Assignment& assignment);

/// Decoded boxes, one element per assigned pair.
struct BoxVars {
  ad::Var cx, cy, w, h;
};

/// Decodes the assigned pairs of `raw_head` ([s*s, b, 5+n_fine]):
/// cx = (2 sigmoid(tx) - 0.5 + col) / s, w = anchor_w * (2 sigmoid(tw))^2.
BoxVars decode_assigned(const ad::Var& raw_head, const Assignment& assignment,
                        const GridSpec& grid);

/// Sum of CIoU losses; `gt_boxes[k]` is the target of entry k.
ad::Var box_loss(const BoxVars& decoded, const std::vector<BBox>& gt_boxes,
                 const Assignment& assignment);

struct LossBreakdown {
  ad::Var total;  // differentiable root
  ad::Var box_term;
  ad::Var obj_term;
  ad::Var cls_term;  // before alpha
  double box = 0.0;
  double obj = 0.0;
  double cls = 0.0;
  double total_value = 0.0;
  Assignment assignment;
};

/// Per-image objective. Throws NumericalError on a non-finite component.
LossBreakdown total_loss(const ad::Var& raw_head, const std::vector<LabeledBox>& gt,
                         const GridSpec& grid, const Taxonomy& taxonomy,
                         const HierLossParams& params);

}  // namespace hdet
