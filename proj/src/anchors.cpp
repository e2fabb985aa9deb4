#include "hdet/anchors.hpp"

#include <algorithm>
#include <numeric>

#include "hdet/error.hpp"
#include "hdet/rng.hpp"

namespace hdet {

double shape_iou(const Anchor& a, const Anchor& b) {
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  return inter / (a.w * a.h + b.w * b.h - inter);
}

double mean_best_iou(const std::vector<Anchor>& shapes, const std::vector<Anchor>& anchors) {
  if (shapes.empty() || anchors.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : shapes) {
    double best = 0.0;
    for (const auto& a : anchors) best = std::max(best, shape_iou(s, a));
    acc += best;
  }
  return acc / static_cast<double>(shapes.size());
}

namespace {

std::vector<std::size_t> nearest(const std::vector<Anchor>& shapes,
                                 const std::vector<Anchor>& centers) {
  std::vector<std::size_t> out(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double v = shape_iou(shapes[i], centers[c]);
      if (v > best_iou) {
        best_iou = v;
        best = c;
      }
    }
    out[i] = best;
  }
  return out;
}

// Replaces centers that own no shape with the shapes farthest from their own
// centers. Returns false when nothing could be re-seeded.
bool reseed_empty(const std::vector<Anchor>& shapes, std::vector<Anchor>& centers,
                  const std::vector<std::size_t>& owner) {
  std::vector<std::size_t> members(centers.size(), 0);
  for (std::size_t o : owner) ++members[o];
  std::vector<bool> taken(shapes.size(), false);
  bool changed = false;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (members[c] > 0) continue;
    std::size_t far = shapes.size();
    double far_dist = 0.0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (taken[i]) continue;
      const double d = 1.0 - shape_iou(shapes[i], centers[owner[i]]);
      if (d > far_dist) {
        far_dist = d;
        far = i;
      }
    }
    if (far == shapes.size()) continue;
    taken[far] = true;
    centers[c] = shapes[far];
    changed = true;
  }
  return changed;
}

}  // namespace

AnchorSet kmeans_anchors(const std::vector<Anchor>& shapes, std::size_t k, std::size_t max_iters,
                         std::uint64_t seed) {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (k > shapes.size())
    throw ValidationError("k=" + std::to_string(k) + " exceeds the " +
                          std::to_string(shapes.size()) + " available box shapes");
  for (const auto& s : shapes)
    if (!(s.w > 0.0) || !(s.h > 0.0)) throw ValidationError("box shapes must be positive");

  Rng rng(seed);
  std::vector<Anchor> distinct;
  for (const auto& s : shapes)
    if (std::find(distinct.begin(), distinct.end(), s) == distinct.end()) distinct.push_back(s);

  std::vector<Anchor> centers;
  if (distinct.size() >= k) {
    // partial Fisher-Yates over the distinct shapes
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(distinct.size() - i);
      std::swap(distinct[i], distinct[j]);
      centers.push_back(distinct[i]);
    }
  } else {
    centers = distinct;
    while (centers.size() < k) centers.push_back(shapes[rng.below(shapes.size())]);
  }

  AnchorSet out;
  double current = mean_best_iou(shapes, centers);
  out.history.push_back(current);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    const auto owner = nearest(shapes, centers);
    std::vector<Anchor> next(k, Anchor{0.0, 0.0});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      next[owner[i]].w += shapes[i].w;
      next[owner[i]].h += shapes[i].h;
      ++count[owner[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        next[c] = centers[c];
        continue;
      }
      next[c].w /= static_cast<double>(count[c]);
      next[c].h /= static_cast<double>(count[c]);
    }
    reseed_empty(shapes, next, owner);
    if (next == centers) break;
    const double candidate = mean_best_iou(shapes, next);
    if (candidate < current) break;
    centers = std::move(next);
    current = candidate;
    out.history.push_back(current);
    ++out.iterations;
  }

  // every anchor keeps at least one member
  for (std::size_t guard = 0; guard < k; ++guard) {
    if (!reseed_empty(shapes, centers, nearest(shapes, centers))) break;
    current = mean_best_iou(shapes, centers);
    out.history.push_back(current);
  }

  std::stable_sort(centers.begin(), centers.end(),
                   [](const Anchor& a, const Anchor& b) { return a.w * a.h < b.w * b.h; });
  out.anchors = std::move(centers);
  out.mean_best_iou = current;
  return out;
}

nlohmann::json to_json(const AnchorSet& set) {
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : set.anchors) anchors.push_back({a.w, a.h});
  return {{"anchors", anchors},
          {"mean_best_iou", set.mean_best_iou},
          {"iterations", set.iterations}};
}

}  // namespace hdet
