#pragma once

#include <cstddef>
#include <vector>

#include "hdet/autodiff.hpp"

namespace hdet {

/// Axis-aligned box in center/size form. Labels are image-normalized.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static BBox from_corners(double x1, double y1, double x2, double y2) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Ground-truth box with its fine class.
struct LabeledBox {
  std::size_t cls = 0;
  BBox box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct ScoredBox {
  BBox box;
  std::size_t cls = 0;
  double score = 0.0;
};

/// Smallest extent allowed into the CIoU loss.
inline constexpr double kMinExtent = 1e-6;

double iou(const BBox& a, const BBox& b);

/// 1 - CIoU. The aspect-ratio trade-off coefficient is treated as a constant
/// when differentiating (see ciou_loss_var).
double ciou_loss(const BBox& pred, const BBox& gt);

/// Differentiable CIoU loss over a batch of predictions.
///
/// cx, cy, w, h are equal-length 1-D vars holding predicted boxes; `gt` holds
/// the matching targets. Returns per-pair losses with the same length.
/// Predicted extents are clamped to >= kMinExtent.
ad::Var ciou_loss_var(const ad::Var& cx, const ad::Var& cy, const ad::Var& w, const ad::Var& h,
                      const std::vector<BBox>& gt);

/// Holds the CIoU trade-off coefficients fixed across repeated evaluations on
/// the calling thread, so finite differences see the same function the
/// backward pass differentiates. While a FrozenTradeOff is alive, each
/// ciou_loss_var call records its coefficients; after freeze(), calls replay
/// them in the recorded order.
class FrozenTradeOff {
 public:
  FrozenTradeOff();
  ~FrozenTradeOff();
  FrozenTradeOff(const FrozenTradeOff&) = delete;
  FrozenTradeOff& operator=(const FrozenTradeOff&) = delete;

  void freeze();
  /// Restarts replay from the first recorded call.
  void rewind();

  /// Used by ciou_loss_var.
  static void apply(std::vector<double>& coefficients);

 private:
  std::vector<std::vector<double>> calls_;
  std::size_t cursor_ = 0;
  bool frozen_ = false;
  FrozenTradeOff* previous_ = nullptr;
};

/// Class-wise greedy non-maximum suppression.
///
/// Candidates are visited by descending score (ties keep input order); a box
/// is dropped when its IoU with an already kept box of the same class reaches
/// `iou_threshold`. The result is sorted by score descending.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_threshold);

}  // namespace hdet
