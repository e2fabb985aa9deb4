#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "hdet/loss.hpp"

namespace hdet {

struct AnchorSet {
  std::vector<Anchor> anchors;  // sorted by area ascending
  double mean_best_iou = 0.0;
  /// mean_best_iou after initialization and after every accepted Lloyd step.
  std::vector<double> history;
  std::size_t iterations = 0;
};

/// IoU of two boxes sharing a center, i.e. a comparison of shapes only.
double shape_iou(const Anchor& a, const Anchor& b);

/// Mean over shapes of the best shape_iou against any anchor.
double mean_best_iou(const std::vector<Anchor>& shapes, const std::vector<Anchor>& anchors);

/// k-means over (w, h) with distance 1 - shape_iou.
///
/// Initial centers are k distinct shapes drawn by the seeded generator
/// (duplicates only when fewer than k distinct shapes exist). Each Lloyd step
/// assigns shapes to the nearest center (lowest index on ties), moves centers
/// to the arithmetic mean of their members, and re-seeds empty clusters from
/// the shape farthest from its center. A step that would lower mean_best_iou
/// is rejected and ends the iteration, so the history never decreases.
/// Throws ValidationError if k is 0 or exceeds the sample count, or a shape
/// is non-positive.
AnchorSet kmeans_anchors(const std::vector<Anchor>& shapes, std::size_t k,
                         std::size_t max_iters = 100, std::uint64_t seed = 0);

nlohmann::json to_json(const AnchorSet& set);

}  // namespace hdet
