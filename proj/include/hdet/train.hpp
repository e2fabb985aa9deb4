#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdet/data.hpp"
#include "hdet/eval.hpp"
#include "hdet/model.hpp"
#include "hdet/taxonomy.hpp"

namespace hdet {

struct EvalSettings {
  double conf = 0.25;
  double nms_iou = 0.5;
  double iou = 0.5;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr = 0.001;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double mosaic_prob = 0.5;
  /// Batch gradients with a larger global L2 norm are rescaled to it; 0 disables.
  double grad_clip = 0.0;
  /// Weight of the box term in the training root; 1 trains the plain objective.
  double box_gain = 5.0;
  /// Weight of the alpha-scaled classification term in the training root.
  double cls_gain = 1.0;
  HierLossParams loss;
  /// Evaluate every this many epochs (and after the last); 0 disables.
  std::size_t eval_every = 5;
  EvalSettings eval;

  /// Throws ValidationError naming the field.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const HierLossParams& p);
void from_json(const nlohmann::json& j, HierLossParams& p);
void to_json(nlohmann::json& j, const EvalSettings& e);
void from_json(const nlohmann::json& j, EvalSettings& e);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  // means over the epoch's samples
  double box = 0.0;
  double obj = 0.0;
  double cls = 0.0;
  double total = 0.0;
  std::optional<double> fine_map;
  std::optional<double> coarse_map;
};

/// Header epoch,box,obj,cls,total,fine_map,coarse_map; mAP cells are empty on
/// epochs without evaluation.
std::string metrics_csv(const std::vector<EpochMetrics>& log);

struct DetectionEval {
  EvalReport fine;
  EvalReport coarse;
};

/// Predicts on every image and scores at both granularities.
DetectionEval evaluate(const Detector& det, std::span<const LabeledImage> images,
                       const Taxonomy& taxonomy, const EvalSettings& settings);

struct TrainResult {
  Detector detector;
  std::vector<EpochMetrics> log;
};

/// Rescales `grads` in place so their global L2 norm is at most max_norm
/// (no-op for max_norm 0). Returns the norm before clipping.
double clip_grad_norm(std::vector<std::vector<double>>& grads, double max_norm);

/// One momentum-SGD step: v = momentum * v + g; p -= lr * v.
void sgd_step(std::vector<NamedTensor>& params, std::vector<std::vector<double>>& velocity,
              const std::vector<std::vector<double>>& grads, double lr, double momentum);

/// Mini-batch training on the per-image objective.
///
/// Each epoch draws a seeded permutation, replaces each sample by a mosaic
/// with probability mosaic_prob, and averages per-image gradients over the
/// batch in sample order before the momentum-SGD step. Batch images may be processed concurrently; the
/// result does not depend on the thread count. Throws NumericalError (with
/// epoch, batch and loss components) on a non-finite loss or gradient.
TrainResult train(const TrainConfig& cfg, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> eval_set, const DetectorConfig& model,
                  const Taxonomy& taxonomy,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace hdet
