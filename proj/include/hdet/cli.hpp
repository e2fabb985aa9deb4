#pragma once

// Batch entry points: gen, anchors, train, eval, ablate, gradcheck.
//
// Exit codes: 0 success, 1 check failure, 2 usage or validation error,
// 3 numerical abort.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdet/data.hpp"
#include "hdet/loss.hpp"
#include "hdet/train.hpp"

namespace hdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// The detector input size is taken from the dataset's images.
struct ModelSettings {
  std::array<std::size_t, 4> widths{16, 32, 64, 64};
  /// Anchors clustered from the training boxes when `anchors` is empty.
  std::size_t anchor_count = 3;
  std::uint64_t anchor_seed = 0;
  std::vector<Anchor> anchors;
};

/// Everything a run needs, stored as one JSON document:
///   {"synth": {...}, "count": 600, "model": {...}, "train": {...}}
/// Missing keys keep their defaults; command-line flags override the file.
struct RunConfig {
  SynthConfig synth;
  std::size_t count = 600;
  ModelSettings model;
  TrainConfig train;

  /// Throws ValidationError naming the field.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelSettings& m);
void from_json(const nlohmann::json& j, ModelSettings& m);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Throws ValidationError for an unreadable or malformed file.
RunConfig load_run_config(const std::filesystem::path& path);

/// class_weighted alphas of the default ablation and of --full-sweep.
inline const std::vector<double> kAblationAlphas{2.5, 3.0, 3.5};
inline const std::vector<double> kFullSweepAlphas{2.5, 2.75, 3.0, 3.25, 3.5};

/// normal, class_weighted for each alpha, proposed(2, 1).
std::vector<HierLossParams> ablation_variants(const std::vector<double>& weighted_alphas);

/// Directory-safe form of run_label, e.g. "proposed_a2.00_b1.00".
std::string run_slug(const HierLossParams& params);

/// Parses and runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hdet::cli
