#pragma once

// Miniature single-scale grid detector.
//
//   [3, N, N] -> 4 x (conv3x3 pad 1 -> bias -> ReLU -> maxpool2)
//             -> conv1x1 -> [b * (5 + n_fine), N/16, N/16]
//
// Default N = 96 with widths 16, 32, 64, 64 gives a 6 x 6 grid.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hdet/autodiff.hpp"
#include "hdet/geometry.hpp"
#include "hdet/image.hpp"
#include "hdet/loss.hpp"

namespace hdet {

struct DetectorConfig {
  std::size_t image_size = 96;
  std::array<std::size_t, 4> widths{16, 32, 64, 64};
  GridSpec grid;  // grid.s must equal image_size / 16

  /// Throws ValidationError.
  void validate() const;
  /// Config for `n_fine` classes and the given anchors at `image_size`.
  static DetectorConfig make(std::size_t image_size, std::size_t n_fine, std::vector<Anchor> anchors);
};

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

inline constexpr double kObjectnessBiasInit = -4.0;
/// Pixel values in [0, 1] enter the network as (x - kInputShift) * kInputScale.
inline constexpr double kInputShift = 0.5;
inline constexpr double kInputScale = 4.0;

struct Detector {
  DetectorConfig config;
  std::vector<NamedTensor> params;  // conv{i}.weight, conv{i}.bias for i = 0..4

  /// Weights and biases uniform in +-1/sqrt(fan_in); objectness biases set to
  /// kObjectnessBiasInit.
  static Detector init(const DetectorConfig& config, std::uint64_t seed);

  std::size_t parameter_count() const;
};

/// Vars of one forward pass.
struct ForwardPass {
  std::vector<ad::Var> params;  // aligned with Detector::params
  ad::Var raw;                  // [b*(5+n_fine), s, s]
  ad::Var head;                 // [s*s, b, 5+n_fine]
};

/// Builds the forward graph on `tape`. With `trainable`, parameters are
/// gradient leaves. `planar` is [3, N, N] in [0, 1].
ForwardPass forward(ad::Tape& tape, const Detector& det, std::span<const double> planar,
                    bool trainable = true);

/// Forward pass over caller-provided parameter vars (aligned with
/// Detector::params of a detector built from `config`).
ForwardPass forward_with(ad::Tape& tape, const DetectorConfig& config, std::vector<ad::Var> params,
                         std::span<const double> planar);

/// Reorders [b*F, s, s] channel-major output into [s*s, b, F].
ad::Var to_head(const ad::Var& raw, const GridSpec& grid);

struct DecodedPair {
  BBox box;
  double objectness = 0.0;
  std::vector<double> class_scores;
};

/// Decodes every (cell, anchor) pair of head values ([s*s, b, F] flat);
/// index = cell * b + anchor.
std::vector<DecodedPair> decode(std::span<const double> head_values, const GridSpec& grid);

/// Raw (tx, ty, tw, th) that decode to `box` from the given cell and anchor.
/// Requires the box to be reachable by that pair.
std::array<double, 4> encode(const BBox& box, std::size_t cell, std::size_t anchor,
                             const GridSpec& grid);

/// score = objectness * max class score, class = argmax; keeps
/// score > conf_threshold, then class-wise NMS.
std::vector<ScoredBox> predict_from_head(std::span<const double> head_values, const GridSpec& grid,
                                         double conf_threshold, double nms_iou);

std::vector<ScoredBox> predict(const Detector& det, const Image& image, double conf_threshold,
                               double nms_iou);

// ---- checkpoint -----------------------------------------------------------
// "HDET1" | u32 little-endian JSON length | JSON metadata | f32 little-endian data

struct Checkpoint {
  Detector detector;
  std::string taxonomy_hash;
};

void save_checkpoint(const Detector& det, const std::string& taxonomy_hash,
                     const std::filesystem::path& path);
/// Throws ValidationError on bad magic, length, metadata or truncated data.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hdet
