#pragma once

// Synthetic dense-cell scenes and the on-disk dataset layout.
//
//   <dir>/imgs/000000.ppm ...   binary PPM (P6), 8-bit RGB
//   <dir>/labels.jsonl          {"image": "imgs/000042.ppm", "boxes": [{"cls": 3, "cx": .., "cy": .., "w": .., "h": ..}]}
//   <dir>/taxonomy.json         {"fine_names": [...], "coarse_names": [...], "fine_to_coarse": [...]}
//   <dir>/manifest.json         counts, config echo, train/test split by image id

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdet/geometry.hpp"
#include "hdet/image.hpp"
#include "hdet/taxonomy.hpp"

namespace hdet {

struct SynthConfig {
  std::size_t n_series = 4;
  std::size_t n_stages = 3;
  std::size_t image_size = 96;
  std::size_t cells_min = 3;
  std::size_t cells_max = 6;
  double radius_min = 0.06;
  double radius_max = 0.10;
  /// Largest allowed 1 - d / (r1 + r2) between any two cells.
  double overlap_max = 0.25;
  /// In (0, 1]; 1 makes all stages of a series look alike.
  double stage_similarity = 0.6;
  /// Per-cell jitter of the stage appearance scalar.
  double appearance_jitter = 0.05;
  /// Background noise std-dev in 8-bit units.
  double noise_std = 8.0;
  std::uint64_t seed = 0;

  std::size_t n_fine() const { return n_series * n_stages; }
  /// Throws ValidationError naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, SynthConfig& c);

struct LabeledImage {
  Image image;
  std::vector<LabeledBox> labels;
  std::string path;  // relative to the dataset root, empty for in-memory images

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

/// Every label inside [0,1]^2 with positive extent and cls < n_fine.
/// Throws ValidationError.
void validate_labels(const std::vector<LabeledBox>& labels, std::size_t n_fine,
                     const std::string& where);

/// Renders image `index` of the stream defined by cfg.seed. `warnings` counts
/// cells that could not be placed within the rejection budget.
LabeledImage synthesize_image(const SynthConfig& cfg, std::size_t index,
                              std::size_t* warnings = nullptr);

struct GenerateSummary {
  std::size_t n_images = 0;
  std::size_t n_labels = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t warnings = 0;
};

/// Test images are the ids with id % 6 == 5 (5:1 split).
bool is_test_id(std::size_t id);

/// Writes the full dataset layout into `dir` (created if needed).
GenerateSummary generate(const SynthConfig& cfg, std::size_t n_images,
                         const std::filesystem::path& dir);

struct Dataset {
  std::vector<LabeledImage> images;
  Taxonomy taxonomy;
  std::vector<std::size_t> train;  // indices into images
  std::vector<std::size_t> test;
  std::optional<SynthConfig> config;

  std::vector<LabeledImage> subset(const std::vector<std::size_t>& ids) const;
};

/// Throws ValidationError for missing or corrupt files and invalid labels.
Dataset load(const std::filesystem::path& dir);

/// Placement choices for one mosaic; pixel units on the 2*out_size canvas.
struct MosaicLayout {
  std::size_t junction_x = 0;
  std::size_t junction_y = 0;
  std::array<double, 4> scales{1.0, 1.0, 1.0, 1.0};
  std::size_t crop_x = 0;
  std::size_t crop_y = 0;
};

/// Junction uniform in the central half of the canvas, scales in [0.5, 1.5],
/// crop offset uniform in [0, out_size].
MosaicLayout random_mosaic_layout(std::size_t out_size, std::uint64_t seed);

/// Boxes narrower or shorter than this many pixels after clipping are dropped.
inline constexpr double kMosaicMinBoxPx = 2.0;

/// Splices four images: source q is scaled and placed with one corner on the
/// junction (q = 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right),
/// labels are clipped to what stays visible, then the canvas is cropped to
/// out_size. Throws ValidationError unless exactly four images are given.
LabeledImage mosaic(const std::vector<LabeledImage>& four, std::size_t out_size,
                    const MosaicLayout& layout);
LabeledImage mosaic(const std::vector<LabeledImage>& four, std::size_t out_size,
                    std::uint64_t seed);

}  // namespace hdet
