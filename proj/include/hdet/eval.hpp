#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hdet/geometry.hpp"
#include "hdet/taxonomy.hpp"

namespace hdet {

enum class Granularity { fine, coarse };

struct EvalReport {
  /// AP per class that has at least one ground truth.
  std::map<std::size_t, double> per_class_ap;
  double map50 = 0.0;
  Granularity granularity = Granularity::fine;
  std::size_t n_images = 0;
  std::size_t n_gt = 0;
  std::size_t n_det = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

using DetectionsPerImage = std::vector<std::vector<ScoredBox>>;
using TruthsPerImage = std::vector<std::vector<LabeledBox>>;

/// All-point interpolated AP from a ranked list of TP/FP flags.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt);

/// Per class: detections ranked by score (ties: image id, then input order)
/// are matched greedily to the unmatched same-class ground truth of highest
/// IoU >= iou_thr. Classes without ground truth are left out of the mean.
EvalReport match_and_ap(const DetectionsPerImage& dets, const TruthsPerImage& gts,
                        std::size_t class_count, double iou_thr = 0.5);

/// Remaps detections and ground truths to coarse ids, then re-matches.
EvalReport eval_coarse(const DetectionsPerImage& dets, const TruthsPerImage& gts,
                       const Taxonomy& taxonomy, double iou_thr = 0.5);

/// Coarse confusion counts: rows = ground-truth coarse class, columns =
/// coarse class of the best-overlapping detection (IoU >= iou_thr), last
/// column = missed. Diagnostic only.
std::vector<std::vector<std::size_t>> coarse_confusion(const DetectionsPerImage& dets,
                                                       const TruthsPerImage& gts,
                                                       const Taxonomy& taxonomy,
                                                       double iou_thr = 0.5);

struct AblationRun {
  LossVariant variant = LossVariant::normal;
  double alpha = 1.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double fine_map = 0.0;
  double coarse_map = 0.0;
  bool failed = false;
};

/// Row label, e.g. "normal", "class_weighted a=2.50", "proposed a=2.00 b=1.00".
std::string run_label(LossVariant variant, double alpha, double beta);

struct AblationRow {
  std::string label;
  LossVariant variant = LossVariant::normal;
  double alpha = 1.0;
  double beta = 0.0;
  std::size_t seed_count = 0;  // successful runs
  std::size_t failed = 0;
  double fine_map_mean = 0.0;
  double fine_map_std = 0.0;  // sample standard deviation, 0 for one run
  double coarse_map_mean = 0.0;
  double coarse_map_std = 0.0;
};

/// Groups runs by label; rows ordered normal, class_weighted by alpha,
/// proposed by (alpha, beta).
std::vector<AblationRow> ablation_rows(const std::vector<AblationRun>& runs);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_markdown(const std::vector<AblationRow>& rows);

}  // namespace hdet
